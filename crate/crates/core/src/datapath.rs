//! Keys, counts, pipeline slots and the bit-exact 48-bit packing that
//! models the payload carried on the DSP cascade bus.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Key as carried through the pipeline; masked to `key_bits` by the layout.
pub type Key = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatapathError {
    #[error("layout occupies {occupancy} bits, exceeding the {bus_bits}-bit bus")]
    OverflowingLayout { occupancy: u32, bus_bits: u32 },
    #[error("{field} value {value:#x} exceeds its {width}-bit field")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        width: u32,
    },
    #[error("packed word {bits:#x} has bits set above the {occupancy}-bit occupancy")]
    MalformedWord { bits: u64, occupancy: u32 },
}

/// Bit budget of the cascade bus payload: valid flag, key and one or two
/// count lanes, packed right-aligned into a 48-bit word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub key_bits: u32,
    /// Width of each count lane.
    pub value_bits: u32,
    /// Number of count lanes (1 or 2; 2 enables the shadow lane).
    pub lanes: u32,
    pub bus_bits: u32,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            key_bits: 24,
            value_bits: 10,
            lanes: 2,
            bus_bits: 48,
        }
    }
}

impl LayoutConfig {
    pub fn new(key_bits: u32, value_bits: u32, lanes: u32) -> Self {
        Self {
            key_bits,
            value_bits,
            lanes,
            bus_bits: 48,
        }
    }

    /// Bits actually used: one valid flag, the key, and all count lanes.
    pub fn occupancy(&self) -> u32 {
        1 + self.key_bits + self.lanes * self.value_bits
    }

    pub fn max_key(&self) -> u64 {
        mask(self.key_bits)
    }

    /// Largest count value one lane can hold.
    pub fn lane_max(&self) -> u64 {
        mask(self.value_bits)
    }

    pub fn has_shadow_lane(&self) -> bool {
        self.lanes == 2
    }

    pub fn validate(&self) -> Result<(), DatapathError> {
        validate_layout(self)
    }
}

fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// A pipeline payload: valid flag, key and the two count lanes. The shadow
/// lane absorbs events routed during a snapshot readout; the master lane
/// carries everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Slot {
    pub valid: bool,
    pub key: Key,
    pub master: u64,
    pub shadow: u64,
}

impl Slot {
    /// The canonical empty slot: all fields zero, so empty slots are
    /// bit-identical in packed streams.
    pub const EMPTY: Slot = Slot {
        valid: false,
        key: 0,
        master: 0,
        shadow: 0,
    };

    pub fn new(key: Key, master: u64, shadow: u64) -> Self {
        Self {
            valid: true,
            key,
            master,
            shadow,
        }
    }

    /// A unit master-lane update, the common case outside snapshots.
    pub fn master_event(key: Key) -> Self {
        Self::new(key, 1, 0)
    }

    /// A unit shadow-lane update, used while a snapshot readout is active.
    pub fn shadow_event(key: Key) -> Self {
        Self::new(key, 0, 1)
    }

    pub fn is_empty(&self) -> bool {
        !self.valid
    }

    /// Sum of both count lanes.
    pub fn lanes_total(&self) -> u64 {
        self.master + self.shadow
    }

    fn check_widths(&self, layout: &LayoutConfig) -> Result<(), DatapathError> {
        if self.key > layout.max_key() {
            return Err(DatapathError::FieldOverflow {
                field: "key",
                value: self.key,
                width: layout.key_bits,
            });
        }
        if self.master > layout.lane_max() {
            return Err(DatapathError::FieldOverflow {
                field: "master",
                value: self.master,
                width: layout.value_bits,
            });
        }
        let shadow_width = if layout.has_shadow_lane() {
            layout.value_bits
        } else {
            0
        };
        if self.shadow > mask(shadow_width) {
            return Err(DatapathError::FieldOverflow {
                field: "shadow",
                value: self.shadow,
                width: shadow_width,
            });
        }
        Ok(())
    }
}

/// Bit-exact encoding of a [`Slot`] on the 48-bit cascade bus. Field order,
/// msb to lsb: valid, key, shadow, master, right-aligned to bit 0. Under the
/// default layout: bit 44 = valid, bits 43..20 = key, 19..10 = shadow,
/// 9..0 = master.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedWord {
    pub bits: u64,
}

impl PackedWord {
    /// Little-endian 8-byte encoding used in binary trace dumps; the top
    /// 16 bits are always zero.
    pub fn to_le_bytes(self) -> [u8; 8] {
        self.bits.to_le_bytes()
    }

    pub fn from_le_bytes(bytes: [u8; 8]) -> Self {
        Self {
            bits: u64::from_le_bytes(bytes),
        }
    }
}

pub fn validate_layout(layout: &LayoutConfig) -> Result<(), DatapathError> {
    if layout.key_bits < 1
        || layout.value_bits < 1
        || layout.lanes < 1
        || layout.lanes > 2
        || layout.bus_bits > 64
    {
        return Err(DatapathError::OverflowingLayout {
            occupancy: layout.occupancy(),
            bus_bits: layout.bus_bits,
        });
    }
    if layout.occupancy() > layout.bus_bits {
        return Err(DatapathError::OverflowingLayout {
            occupancy: layout.occupancy(),
            bus_bits: layout.bus_bits,
        });
    }
    Ok(())
}

pub fn pack_slot(slot: &Slot, layout: &LayoutConfig) -> Result<PackedWord, DatapathError> {
    slot.check_widths(layout)?;
    let value_bits = layout.value_bits;
    let mut bits = slot.master;
    if layout.has_shadow_lane() {
        bits |= slot.shadow << value_bits;
    }
    let key_shift = layout.lanes * value_bits;
    bits |= slot.key << key_shift;
    if slot.valid {
        bits |= 1u64 << (key_shift + layout.key_bits);
    }
    Ok(PackedWord { bits })
}

pub fn unpack_slot(word: PackedWord, layout: &LayoutConfig) -> Result<Slot, DatapathError> {
    let occupancy = layout.occupancy();
    if occupancy < 64 && (word.bits >> occupancy) != 0 {
        return Err(DatapathError::MalformedWord {
            bits: word.bits,
            occupancy,
        });
    }
    let value_bits = layout.value_bits;
    let master = word.bits & mask(value_bits);
    let shadow = if layout.has_shadow_lane() {
        (word.bits >> value_bits) & mask(value_bits)
    } else {
        0
    };
    let key_shift = layout.lanes * value_bits;
    let key = (word.bits >> key_shift) & mask(layout.key_bits);
    let valid = (word.bits >> (key_shift + layout.key_bits)) & 1 != 0;
    Ok(Slot {
        valid,
        key,
        master,
        shadow,
    })
}

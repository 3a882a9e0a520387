//! Heap geometry and collector tuning.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const WORD_BYTES: usize = 8;

/// Geometry and tuning knobs for one heap instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeapConfig {
    pub page_bytes: usize,
    /// Bytes allocated since the last collection that arm the slow-path trigger.
    pub nursery_threshold_bytes: usize,
    pub word_bytes: usize,
    /// Upper bound on committed memory.
    pub heap_reserve_bytes: usize,
    /// Releases allowed per collection, as a multiple of the objects allocated since the last one.
    pub decrement_budget_factor: Ratio<u64>,
    /// Width of a page utilization bin.
    pub bin_width: Ratio<u64>,
    /// Capacity of the stack-disciplined root region, in words.
    pub root_capacity_words: usize,
    /// Number of words in the global root region.
    pub global_words: usize,
}

impl Default for HeapConfig {
    fn default() -> Self {
        Self {
            page_bytes: 4096,
            nursery_threshold_bytes: 2 << 20,
            word_bytes: WORD_BYTES,
            heap_reserve_bytes: 256 << 20,
            decrement_budget_factor: Ratio::new(3, 2),
            bin_width: Ratio::new(1, 20),
            root_capacity_words: 1 << 16,
            global_words: 256,
        }
    }
}

impl HeapConfig {
    pub fn with_reserve(mut self, bytes: usize) -> Self {
        self.heap_reserve_bytes = bytes;
        self
    }

    pub fn with_nursery(mut self, bytes: usize) -> Self {
        self.nursery_threshold_bytes = bytes;
        self
    }

    pub fn with_page(mut self, bytes: usize) -> Self {
        self.page_bytes = bytes;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.page_bytes.is_power_of_two() || self.page_bytes < 64 {
            return Err(ConfigError::PageSize(self.page_bytes));
        }
        if self.word_bytes != WORD_BYTES {
            return Err(ConfigError::WordSize(self.word_bytes));
        }
        if self.nursery_threshold_bytes == 0 || !self.nursery_threshold_bytes.is_multiple_of(self.page_bytes) {
            return Err(ConfigError::Nursery {
                nursery: self.nursery_threshold_bytes,
                page: self.page_bytes,
            });
        }
        if self.heap_reserve_bytes == 0 || !self.heap_reserve_bytes.is_multiple_of(self.page_bytes) {
            return Err(ConfigError::Reserve {
                reserve: self.heap_reserve_bytes,
                page: self.page_bytes,
            });
        }
        if self.decrement_budget_factor <= Ratio::from_integer(1) {
            return Err(ConfigError::BudgetFactor);
        }
        if self.bin_width <= Ratio::from_integer(0) || self.bin_width > Ratio::from_integer(1) {
            return Err(ConfigError::BinWidth);
        }
        if self.root_capacity_words == 0 {
            return Err(ConfigError::RootCapacity);
        }
        Ok(())
    }

    pub fn page_count(&self) -> usize {
        self.heap_reserve_bytes / self.page_bytes
    }

    /// `ceil(decrement_budget_factor * allocations)`.
    pub fn decrement_budget(&self, allocations: u64) -> u64 {
        (self.decrement_budget_factor * Ratio::from_integer(allocations))
            .ceil()
            .to_integer()
    }

    /// Utilization bin for a page holding `live` of `slots` objects: `floor((live/slots) / bin_width)`.
    pub fn bin_for(&self, live: u32, slots: u32) -> u32 {
        let utilization = Ratio::new(u64::from(live), u64::from(slots.max(1)));
        (utilization / self.bin_width).floor().to_integer() as u32
    }

    pub fn bin_count(&self) -> usize {
        (Ratio::from_integer(1u64) / self.bin_width).floor().to_integer() as usize + 1
    }
}

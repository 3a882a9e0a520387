//! Conservatively scanned root regions: a LIFO frame stack plus a global area.

use crate::error::ContractViolation;

/// Handle for one pushed frame; popping must follow LIFO order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameToken {
    depth: usize,
    start: usize,
}

impl FrameToken {
    pub fn start(self) -> usize {
        self.start
    }
}

#[derive(Debug, Clone)]
pub struct RootRegion {
    words: Vec<u64>,
    capacity: usize,
    frames: Vec<usize>,
    globals: Vec<u64>,
}

impl RootRegion {
    pub fn new(capacity: usize, global_words: usize) -> Self {
        Self { words: Vec::with_capacity(capacity.min(1 << 16)), capacity, frames: Vec::new(), globals: vec![0; global_words] }
    }

    pub fn push(&mut self, values: impl IntoIterator<Item = u64>) -> Result<FrameToken, ContractViolation> {
        let start = self.words.len();
        self.words.extend(values);
        if self.words.len() > self.capacity {
            self.words.truncate(start);
            return Err(ContractViolation::RootOverflow);
        }
        self.frames.push(start);
        Ok(FrameToken { depth: self.frames.len(), start })
    }

    /// Pops `frame`, returning how many words it held.
    pub fn pop(&mut self, frame: FrameToken) -> Result<usize, ContractViolation> {
        match self.frames.last() {
            None => Err(ContractViolation::RootUnderflow),
            Some(&start) if start == frame.start && self.frames.len() == frame.depth => {
                self.frames.pop();
                let count = self.words.len() - start;
                self.words.truncate(start);
                Ok(count)
            }
            Some(_) => Err(ContractViolation::NonLifoPop),
        }
    }

    /// Overwrites word `index` of a live frame; returns the absolute position.
    pub fn set(&mut self, frame: FrameToken, index: usize, word: u64) -> Result<usize, ContractViolation> {
        if frame.depth == 0 || frame.depth > self.frames.len() || self.frames[frame.depth - 1] != frame.start {
            return Err(ContractViolation::DeadFrame);
        }
        let end = self.frames.get(frame.depth).copied().unwrap_or(self.words.len());
        let len = end - frame.start;
        if index >= len {
            return Err(ContractViolation::RootIndex { index, len });
        }
        self.words[frame.start + index] = word;
        Ok(frame.start + index)
    }

    pub fn set_global(&mut self, index: usize, word: u64) -> Result<(), ContractViolation> {
        let len = self.globals.len();
        let slot = self.globals.get_mut(index).ok_or(ContractViolation::RootIndex { index, len })?;
        *slot = word;
        Ok(())
    }

    /// Words below the stack top.
    pub fn stack(&self) -> &[u64] {
        &self.words
    }

    pub fn globals(&self) -> &[u64] {
        &self.globals
    }

    /// Every scannable word: live stack words then globals.
    pub fn scan(&self) -> impl Iterator<Item = u64> + '_ {
        self.words.iter().chain(self.globals.iter()).copied()
    }

    pub fn scan_len(&self) -> usize {
        self.words.len() + self.globals.len()
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }
}

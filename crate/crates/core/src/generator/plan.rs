use crate::bands::BandSchedule;

/// Block-causal attention layout: a condition token (block 0) followed by
/// every band's tokens in ascending frequency, each band row-major.
/// A query may attend to any key whose block is not later than its own.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPlan {
    block_of: Vec<usize>,
    /// Exclusive end position of each block.
    block_end: Vec<usize>,
}

impl AttentionPlan {
    pub fn new(schedule: &BandSchedule) -> Self {
        let mut block_of = vec![0];
        let mut block_end = vec![1];
        for (i, n) in schedule.token_counts().into_iter().enumerate() {
            block_of.extend(std::iter::repeat_n(i + 1, n));
            block_end.push(block_of.len());
        }
        Self { block_of, block_end }
    }

    /// Condition token plus all band tokens.
    pub fn total_len(&self) -> usize {
        self.block_of.len()
    }

    pub fn blocks(&self) -> usize {
        self.block_end.len()
    }

    pub fn block_of(&self, pos: usize) -> usize {
        self.block_of[pos]
    }

    /// Positions `block_start(b)..block_end(b)` form block `b`.
    pub fn block_start(&self, block: usize) -> usize {
        if block == 0 {
            0
        } else {
            self.block_end[block - 1]
        }
    }

    pub fn block_end(&self, block: usize) -> usize {
        self.block_end[block]
    }

    pub fn allow(&self, query: usize, key: usize) -> bool {
        self.block_of[key] <= self.block_of[query]
    }

    /// Number of keys visible from `query`; always a prefix of the sequence.
    pub fn visible(&self, query: usize) -> usize {
        self.block_end[self.block_of[query]]
    }

    /// Whether `len` ends exactly on a block boundary.
    pub fn is_boundary(&self, len: usize) -> bool {
        self.block_end.contains(&len)
    }
}

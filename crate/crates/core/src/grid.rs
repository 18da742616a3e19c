use std::ops::{Index, IndexMut};

/// Dense `N x K` table indexed by `(subchannel, user)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    subchannels: usize,
    users: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(subchannels: usize, users: usize) -> Self {
        Self {
            subchannels,
            users,
            data: vec![0.0; subchannels * users],
        }
    }

    pub fn subchannels(&self) -> usize {
        self.subchannels
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.users..(n + 1) * self.users]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.users..(n + 1) * self.users]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sum over subchannels for user `k`.
    pub fn column_sum(&self, k: usize) -> f64 {
        (0..self.subchannels).map(|n| self[(n, k)]).sum()
    }
}

impl Index<(usize, usize)> for Grid {
    type Output = f64;

    #[inline]
    fn index(&self, (n, k): (usize, usize)) -> &f64 {
        &self.data[n * self.users + k]
    }
}

impl IndexMut<(usize, usize)> for Grid {
    #[inline]
    fn index_mut(&mut self, (n, k): (usize, usize)) -> &mut f64 {
        &mut self.data[n * self.users + k]
    }
}

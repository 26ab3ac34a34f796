//! Hilbert curve serialization of a `2^k x 2^k` grid.
//!
//! Orientation is fixed: index 0 sits at `(row 0, col 0)` and the last index
//! at `(side - 1, 0)`. Cells are produced by the usual iterative quadrant
//! construction (reflect / transpose per level).

use crate::error::{contract, Result};

pub const MAX_ORDER: u32 = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertMap {
    order: u32,
    side: usize,
    forward: Vec<(usize, usize)>,
    inverse: Vec<usize>,
}

/// Cell `(row, col)` of curve index `d` on a grid of side `n` (power of two).
pub fn index_to_cell(n: usize, d: usize) -> (usize, usize) {
    let (mut x, mut y) = (0usize, 0usize);
    let mut t = d;
    let mut s = 1;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x, y)
}

impl HilbertMap {
    pub fn new(order: u32) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(contract(format!("hilbert order must be in 1..={MAX_ORDER}, got {order}")));
        }
        let side = 1usize << order;
        let n = side * side;
        let forward: Vec<(usize, usize)> = (0..n).map(|d| index_to_cell(side, d)).collect();
        let mut inverse = vec![0; n];
        for (d, &(r, c)) in forward.iter().enumerate() {
            inverse[r * side + c] = d;
        }
        Ok(Self {
            order,
            side,
            forward,
            inverse,
        })
    }

    /// Map for a grid of the given side (must be a power of two >= 2).
    pub fn for_side(side: usize) -> Result<Self> {
        if side < 2 || !side.is_power_of_two() {
            return Err(contract(format!("side {side} is not a power of two >= 2")));
        }
        Self::new(side.trailing_zeros())
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn cell(&self, index: usize) -> (usize, usize) {
        self.forward[index]
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        self.inverse[row * self.side + col]
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.forward
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
        a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
    }

    #[test]
    fn order_one() {
        let m = HilbertMap::new(1).unwrap();
        assert_eq!(m.cells(), &[(0, 0), (0, 1), (1, 1), (1, 0)]);
    }

    #[test]
    fn order_two_reference() {
        // Hand-unrolled recursive construction: the lower-left quadrant is
        // the transposed order-1 curve, the top two are translated copies and
        // the last is the anti-transposed copy.
        let expect = [
            (0, 0), (1, 0), (1, 1), (0, 1),
            (0, 2), (0, 3), (1, 3), (1, 2),
            (2, 2), (2, 3), (3, 3), (3, 2),
            (3, 1), (2, 1), (2, 0), (3, 0),
        ];
        let m = HilbertMap::new(2).unwrap();
        assert_eq!(m.cells(), &expect);
        for w in expect.windows(2) {
            assert_eq!(manhattan(w[0], w[1]), 1);
        }
    }

    #[test]
    fn endpoints() {
        for k in 1..=6 {
            let m = HilbertMap::new(k).unwrap();
            assert_eq!(m.cell(0), (0, 0));
            assert_eq!(m.cell(m.len() - 1), (m.side() - 1, 0));
        }
    }

    #[test]
    fn order_bounds() {
        assert!(HilbertMap::new(0).is_err());
        assert!(HilbertMap::new(13).is_err());
        assert!(HilbertMap::for_side(48).is_err());
        assert_eq!(HilbertMap::for_side(64).unwrap().order(), 6);
    }
}

//! Uniform hypercube partitions of `[0,1]^d`.
//!
//! Cells are half-open `[k/m, (k+1)/m)` along every axis, except the last
//! cell which is closed so that `x_k = 1` has a home. Cells are addressed by
//! their per-axis indices and by a row-major flat key (first axis most
//! significant).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    dim: usize,
    m: u64,
    cell_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub indices: Vec<u64>,
    pub flat: u64,
}

impl Partition {
    /// Fails if `dim` or `m` is zero, or if `m^dim` does not fit in a `u64`.
    pub fn new(dim: usize, m: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("partition dimension must be positive".into()));
        }
        if m == 0 {
            return Err(Error::Domain("partitioning parameter must be positive".into()));
        }
        let cell_count = u32::try_from(dim)
            .ok()
            .and_then(|d| m.checked_pow(d))
            .ok_or_else(|| Error::Domain(format!("{m}^{dim} cells overflow a 64-bit key")))?;
        Ok(Self { dim, m, cell_count })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn cell_count(&self) -> u64 {
        self.cell_count
    }

    pub fn cell_of(&self, x: &[f64]) -> Result<CellId> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!(
                "point has {} coordinates, partition expects {}",
                x.len(),
                self.dim
            )));
        }
        let mut indices = Vec::with_capacity(self.dim);
        let mut flat = 0u64;
        for (k, &xk) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&xk) {
                return Err(Error::Domain(format!("coordinate {k} = {xk} outside [0,1]")));
            }
            let idx = ((xk * self.m as f64).floor() as u64).min(self.m - 1);
            indices.push(idx);
            flat = flat * self.m + idx;
        }
        Ok(CellId { indices, flat })
    }

    /// Inverse of the flat encoding.
    pub fn cell_from_flat(&self, flat: u64) -> Result<CellId> {
        if flat >= self.cell_count {
            return Err(Error::Domain(format!(
                "flat key {flat} outside [0, {})",
                self.cell_count
            )));
        }
        let mut indices = vec![0; self.dim];
        let mut rest = flat;
        for slot in indices.iter_mut().rev() {
            *slot = rest % self.m;
            rest /= self.m;
        }
        Ok(CellId { indices, flat })
    }

    /// The cell of a coarser partition (`coarse_m` dividing `m`) containing
    /// `cell`.
    pub fn coarsen(&self, cell: &CellId, coarse_m: u64) -> Result<CellId> {
        if coarse_m == 0 || !self.m.is_multiple_of(coarse_m) {
            return Err(Error::Domain(format!("{coarse_m} does not divide {}", self.m)));
        }
        let ratio = self.m / coarse_m;
        let mut flat = 0;
        let indices: Vec<u64> = cell
            .indices
            .iter()
            .map(|&i| {
                let c = i / ratio;
                flat = flat * coarse_m + c;
                c
            })
            .collect();
        Ok(CellId { indices, flat })
    }
}

/// `min(ceil(T^(1/(2 alpha + d))), cap)`.
///
/// The ceiling is computed as the smallest integer `k` with
/// `k^(2 alpha + d) >= T`, so exact powers such as `1000^(1/3)` do not get
/// bumped by rounding noise.
pub fn partitioning_parameter(horizon: u64, alpha: f64, dim: usize, cap: Option<u64>) -> Result<u64> {
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("Hölder exponent must be positive, got {alpha}")));
    }
    if dim == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    if cap == Some(0) {
        return Err(Error::Domain("memory cap must be positive".into()));
    }
    let exponent = 2.0 * alpha + dim as f64;
    let t = horizon as f64;
    let mut k = t.powf(1.0 / exponent).ceil().max(1.0);
    while k > 1.0 && (k - 1.0).powf(exponent) >= t * (1.0 - 1e-12) {
        k -= 1.0;
    }
    while k.powf(exponent) < t * (1.0 - 1e-12) {
        k += 1.0;
    }
    let m = k as u64;
    Ok(cap.map_or(m, |c| m.min(c)))
}

/// Position of a global step under the doubling trick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    /// 1-based phase number.
    pub index: u32,
    /// 1-based step within the phase.
    pub step: u64,
    /// Length of the phase, `2^(index-1) * first_phase`.
    pub horizon: u64,
}

/// Phase `j` covers global steps `((2^(j-1) - 1) T_hat, (2^j - 1) T_hat]`.
pub fn doubling_schedule(first_phase: u64, t: u64) -> Result<Phase> {
    if first_phase == 0 || t == 0 {
        return Err(Error::Domain("doubling schedule needs T_hat >= 1 and t >= 1".into()));
    }
    let mut start = 0u64;
    let mut len = first_phase;
    let mut index = 1u32;
    loop {
        if t <= start + len {
            return Ok(Phase { index, step: t - start, horizon: len });
        }
        start += len;
        len = len
            .checked_mul(2)
            .ok_or_else(|| Error::Domain("doubling schedule overflow".into()))?;
        index += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cell_of_examples() {
        let p = Partition::new(2, 4).unwrap();
        assert_eq!(p.cell_of(&[0.30, 0.99]).unwrap().indices, vec![1, 3]);
        let p = Partition::new(2, 2).unwrap();
        assert_eq!(p.cell_of(&[1.0, 0.5]).unwrap().indices, vec![1, 1]);
        for (d, m) in [(1, 1), (3, 5), (7, 2)] {
            let p = Partition::new(d, m).unwrap();
            let c = p.cell_of(&vec![0.0; d]).unwrap();
            assert!(c.indices.iter().all(|&i| i == 0));
            assert_eq!(c.flat, 0);
        }
    }

    #[test]
    fn cell_of_rejects_out_of_range() {
        let p = Partition::new(2, 3).unwrap();
        assert!(matches!(p.cell_of(&[0.5, 1.01]), Err(Error::Domain(_))));
        assert!(matches!(p.cell_of(&[-0.1, 0.2]), Err(Error::Domain(_))));
        assert!(matches!(p.cell_of(&[f64::NAN, 0.2]), Err(Error::Domain(_))));
        assert!(matches!(p.cell_of(&[0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_is_row_major() {
        let p = Partition::new(3, 4).unwrap();
        let c = p.cell_of(&[0.3, 0.6, 0.9]).unwrap();
        assert_eq!(c.indices, vec![1, 2, 3]);
        assert_eq!(c.flat, 16 + 2 * 4 + 3);
        assert_eq!(p.cell_from_flat(c.flat).unwrap(), c);
        assert_eq!(p.cell_count(), 64);
    }

    #[test]
    fn partition_rejects_overflow() {
        assert!(Partition::new(64, 3).is_err());
        assert!(Partition::new(0, 3).is_err());
        assert!(Partition::new(2, 0).is_err());
    }

    #[test]
    fn partitioning_parameter_examples() {
        assert_eq!(partitioning_parameter(10_000, 2.0, 10, None).unwrap(), 2);
        assert_eq!(partitioning_parameter(10_000, 1.0, 10, None).unwrap(), 3);
        assert_eq!(partitioning_parameter(10_000, 1.65, 10, None).unwrap(), 2);
        assert_eq!(partitioning_parameter(1, 0.3, 4, None).unwrap(), 1);
        assert_eq!(partitioning_parameter(1000, 1.0, 1, None).unwrap(), 10);
        assert_eq!(partitioning_parameter(10_000, 1.0, 1, None).unwrap(), 22);
        assert_eq!(partitioning_parameter(10_000, 1.0, 1, Some(5)).unwrap(), 5);
    }

    #[test]
    fn partitioning_parameter_rejects_bad_inputs() {
        assert!(partitioning_parameter(0, 1.0, 1, None).is_err());
        assert!(partitioning_parameter(10, 0.0, 1, None).is_err());
        assert!(partitioning_parameter(10, -1.0, 1, None).is_err());
        assert!(partitioning_parameter(10, 1.0, 0, None).is_err());
        assert!(partitioning_parameter(10, 1.0, 1, Some(0)).is_err());
    }

    /// Cumulative-sum oracle for the phase lengths.
    fn schedule_oracle(t_hat: u64, t: u64) -> (u32, u64, u64) {
        let lens: Vec<u64> = (0..40).map(|j| t_hat << j).collect();
        let mut cum = 0;
        for (j, len) in lens.iter().enumerate() {
            if t <= cum + len {
                return (j as u32 + 1, t - cum, *len);
            }
            cum += len;
        }
        unreachable!()
    }

    #[test]
    fn doubling_schedule_examples() {
        let p = doubling_schedule(100, 1).unwrap();
        assert_eq!((p.index, p.step, p.horizon), (1, 1, 100));
        let p = doubling_schedule(100, 101).unwrap();
        assert_eq!((p.index, p.step, p.horizon), (2, 1, 200));
        let p = doubling_schedule(100, 300).unwrap();
        assert_eq!((p.index, p.step, p.horizon), (2, 200, 200));
        assert!(doubling_schedule(0, 1).is_err());
    }

    proptest! {
        #[test]
        fn doubling_matches_oracle(t_hat in 1u64..500, t in 1u64..200_000) {
            let p = doubling_schedule(t_hat, t).unwrap();
            prop_assert_eq!((p.index, p.step, p.horizon), schedule_oracle(t_hat, t));
        }

        #[test]
        fn cell_of_is_total_and_in_range(
            xs in proptest::collection::vec(0.0f64..=1.0, 1..6),
            m in 1u64..9,
        ) {
            let p = Partition::new(xs.len(), m).unwrap();
            let c = p.cell_of(&xs).unwrap();
            prop_assert!(c.indices.iter().all(|&i| i < m));
            prop_assert!(c.flat < p.cell_count());
            prop_assert_eq!(p.cell_from_flat(c.flat).unwrap(), c);
        }

        #[test]
        fn refinement_nests(
            xs in proptest::collection::vec(0.0f64..=1.0, 1..5),
            m in 1u64..9,
        ) {
            let coarse = Partition::new(xs.len(), m).unwrap();
            let fine = Partition::new(xs.len(), 2 * m).unwrap();
            let fc = fine.cell_of(&xs).unwrap();
            let halved: Vec<u64> = fc.indices.iter().map(|i| i / 2).collect();
            prop_assert_eq!(&halved, &coarse.cell_of(&xs).unwrap().indices);
            prop_assert_eq!(fine.coarsen(&fc, m).unwrap(), coarse.cell_of(&xs).unwrap());
        }

        #[test]
        fn partitioning_parameter_monotone(
            t in 1u64..1_000_000,
            alpha in 0.1f64..5.0,
            d in 1usize..12,
        ) {
            let m = partitioning_parameter(t, alpha, d, None).unwrap();
            prop_assert!(partitioning_parameter(t, alpha + 0.5, d, None).unwrap() <= m);
            prop_assert!(partitioning_parameter(t, alpha, d + 1, None).unwrap() <= m);
            prop_assert!(partitioning_parameter(t + 1000, alpha, d, None).unwrap() >= m);
            // smallest integer whose (2a+d)-th power reaches t
            let e = 2.0 * alpha + d as f64;
            prop_assert!((m as f64).powf(e) >= t as f64 * (1.0 - 1e-9));
            if m > 1 {
                prop_assert!(((m - 1) as f64).powf(e) < t as f64 * (1.0 + 1e-9));
            }
        }
    }
}

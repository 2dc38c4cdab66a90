//! Design-vector layouts for the confounder, mediator and outcome regressions.
//!
//! Column order (intercept first):
//!
//! ```text
//! C(d) = [1, A, N, V_1..V_q, X_1..X_p]
//! C(m) = [C(d), D_own, D_loo]
//! C(y) = [C(m), M_own, M_loo]
//! ```
//!
//! `*_loo` is the leave-one-out cluster mean; in a singleton cluster it is the
//! individual's own value.

use crate::dataset::ClusterDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignSpec {
    pub p: usize,
    pub q: usize,
}

/// Column indices shared by all three layouts.
pub const COL_INTERCEPT: usize = 0;
pub const COL_TREATMENT: usize = 1;
pub const COL_SIZE: usize = 2;

impl DesignSpec {
    pub fn new(p: usize, q: usize) -> Self {
        DesignSpec { p, q }
    }

    pub fn for_dataset(ds: &ClusterDataset) -> Self {
        DesignSpec::new(ds.p(), ds.q())
    }

    pub fn d_dim(&self) -> usize {
        3 + self.q + self.p
    }

    pub fn m_dim(&self) -> usize {
        self.d_dim() + 2
    }

    pub fn y_dim(&self) -> usize {
        self.m_dim() + 2
    }

    /// Index of `D_own` in the mediator and outcome layouts.
    pub fn col_d_own(&self) -> usize {
        self.d_dim()
    }

    pub fn col_d_loo(&self) -> usize {
        self.d_dim() + 1
    }

    pub fn col_m_own(&self) -> usize {
        self.m_dim()
    }

    pub fn col_m_loo(&self) -> usize {
        self.m_dim() + 1
    }

    /// Writes `C(d)` into `out[..d_dim]`.
    pub fn fill_base(&self, out: &mut [f64], arm: f64, size: f64, v: &[f64], x: &[f64]) {
        debug_assert_eq!(v.len(), self.q);
        debug_assert_eq!(x.len(), self.p);
        out[COL_INTERCEPT] = 1.0;
        out[COL_TREATMENT] = arm;
        out[COL_SIZE] = size;
        out[3..3 + self.q].copy_from_slice(v);
        out[3 + self.q..self.d_dim()].copy_from_slice(x);
    }

    pub fn d_row(&self, arm: f64, size: f64, v: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d_dim()];
        self.fill_base(&mut out, arm, size, v, x);
        out
    }

    pub fn m_row(&self, arm: f64, size: f64, v: &[f64], x: &[f64], d: f64, d_loo: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.m_dim()];
        self.fill_base(&mut out, arm, size, v, x);
        out[self.col_d_own()] = d;
        out[self.col_d_loo()] = d_loo;
        out
    }

    #[allow(clippy::too_many_arguments)]
    pub fn y_row(
        &self,
        arm: f64,
        size: f64,
        v: &[f64],
        x: &[f64],
        d: f64,
        d_loo: f64,
        m: f64,
        m_loo: f64,
    ) -> Vec<f64> {
        let mut out = vec![0.0; self.y_dim()];
        self.fill_base(&mut out, arm, size, v, x);
        out[self.col_d_own()] = d;
        out[self.col_d_loo()] = d_loo;
        out[self.col_m_own()] = m;
        out[self.col_m_loo()] = m_loo;
        out
    }
}

/// Leave-one-out means; a singleton's value is its own.
pub fn loo_means(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 1 {
        return values.to_vec();
    }
    let total: f64 = values.iter().sum();
    let denom = (n - 1) as f64;
    values.iter().map(|v| (total - v) / denom).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major design matrices for every observed individual.
#[derive(Debug, Clone)]
pub struct ObservedDesign {
    pub spec: DesignSpec,
    pub d_rows: Vec<f64>,
    pub m_rows: Vec<f64>,
    pub y_rows: Vec<f64>,
}

impl ObservedDesign {
    pub fn build(ds: &ClusterDataset, spec: DesignSpec) -> Self {
        let n = ds.n_total();
        let (dd, md, yd) = (spec.d_dim(), spec.m_dim(), spec.y_dim());
        let mut d_rows = vec![0.0; n * dd];
        let mut m_rows = vec![0.0; n * md];
        let mut y_rows = vec![0.0; n * yd];
        for (i, c) in ds.clusters().iter().enumerate() {
            let size = c.size() as f64;
            let ds_vals: Vec<f64> = c.individuals.iter().map(|x| x.d).collect();
            let ms_vals: Vec<f64> = c.individuals.iter().map(|x| x.m).collect();
            let d_loo = loo_means(&ds_vals);
            let m_loo = loo_means(&ms_vals);
            for (j, g) in ds.range(i).enumerate() {
                let ind = &c.individuals[j];
                spec.fill_base(&mut d_rows[g * dd..(g + 1) * dd], c.arm(), size, &c.v, &ind.x);
                let mrow = &mut m_rows[g * md..(g + 1) * md];
                spec.fill_base(mrow, c.arm(), size, &c.v, &ind.x);
                mrow[spec.col_d_own()] = ind.d;
                mrow[spec.col_d_loo()] = d_loo[j];
                let yrow = &mut y_rows[g * yd..(g + 1) * yd];
                yrow[..md].copy_from_slice(&m_rows[g * md..(g + 1) * md]);
                yrow[spec.col_m_own()] = ind.m;
                yrow[spec.col_m_loo()] = m_loo[j];
            }
        }
        ObservedDesign {
            spec,
            d_rows,
            m_rows,
            y_rows,
        }
    }

    pub fn d_row(&self, g: usize) -> &[f64] {
        let k = self.spec.d_dim();
        &self.d_rows[g * k..(g + 1) * k]
    }

    pub fn m_row(&self, g: usize) -> &[f64] {
        let k = self.spec.m_dim();
        &self.m_rows[g * k..(g + 1) * k]
    }

    pub fn y_row(&self, g: usize) -> &[f64] {
        let k = self.spec.y_dim();
        &self.y_rows[g * k..(g + 1) * k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loo_mean_of_singleton_is_own_value() {
        assert_eq!(loo_means(&[3.5]), vec![3.5]);
        assert_eq!(loo_means(&[1.0, 2.0, 6.0]), vec![4.0, 3.5, 1.5]);
    }

    #[test]
    fn layouts_nest() {
        let s = DesignSpec::new(3, 1);
        assert_eq!(s.d_dim(), 7);
        assert_eq!(s.m_dim(), 9);
        assert_eq!(s.y_dim(), 11);
        let row = s.y_row(1.0, 25.0, &[0.4], &[1.0, 2.0, 3.0], 0.5, 0.6, 0.7, 0.8);
        assert_eq!(row, vec![1.0, 1.0, 25.0, 0.4, 1.0, 2.0, 3.0, 0.5, 0.6, 0.7, 0.8]);
    }
}

//! Network input encoding: a 5-row tensor `[P; Q; R; X; F]`.

use serde::{Deserialize, Serialize};

use crate::powerflow::InjectionSet;
use crate::scalar::Scalar;
use crate::topology::{SwitchConfig, TransformedGraph};

pub const INPUT_ROWS: usize = 5;

/// Row-major `5 × width` tensor with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTensor<T> {
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> InputTensor<T> {
    pub fn zeros(width: usize) -> Self {
        Self {
            width,
            data: vec![T::zero(); INPUT_ROWS * width],
        }
    }

    pub fn from_rows(rows: [Vec<T>; INPUT_ROWS]) -> Self {
        let width = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == width), "ragged input rows");
        Self {
            width,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (INPUT_ROWS, self.width)
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Frozen min-max ranges for the P, Q, R, X rows, fixed at environment construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub p: (f64, f64),
    pub q: (f64, f64),
    pub r: (f64, f64),
    pub x: (f64, f64),
}

impl Normalizer {
    /// Ranges from nominal case data: net injection spans `[-max load, max DG capacity]`,
    /// impedances span `[0, max]`.
    pub fn from_case(tg: &TransformedGraph) -> Self {
        let case = tg.case();
        let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, f64::max);
        Self {
            p: (
                -max(&mut case.loads.iter().map(|l| l.p)),
                max(&mut case.dgs.iter().map(|d| d.p_max)),
            ),
            q: (
                -max(&mut case.loads.iter().map(|l| l.q)),
                max(&mut case.dgs.iter().map(|d| d.q_max)),
            ),
            r: (0.0, max(&mut case.lines.iter().map(|l| l.r))),
            x: (0.0, max(&mut case.lines.iter().map(|l| l.x))),
        }
    }

    fn scale<T: Scalar>(range: (f64, f64), value: T) -> T {
        let (lo, hi) = (T::of(range.0), T::of(range.1));
        if hi <= lo {
            return T::zero();
        }
        ((value - lo) / (hi - lo)).max(T::zero()).min(T::one())
    }
}

/// Tensor width: the line count, widened to the bus count for tree-shaped cases.
pub fn input_width(tg: &TransformedGraph) -> usize {
    tg.case().line_count().max(tg.case().bus_count())
}

/// Encodes the observation.
///
/// P, Q: per-bus net injection (generation positive, load negative), scaled,
/// zero-padded past the last bus. R, X: scaled line impedance, zero for open
/// switches. F: cumulative switch operations divided by `n_step`, at switch columns.
pub fn build_input<T: Scalar>(
    tg: &TransformedGraph,
    normalizer: &Normalizer,
    cfg: &SwitchConfig,
    injections: &InjectionSet<T>,
    op_counts: &[u32],
    n_step: f64,
) -> InputTensor<T> {
    let case = tg.case();
    let width = input_width(tg);
    let n = case.bus_count();
    let mut net_p = vec![T::zero(); n];
    let mut net_q = vec![T::zero(); n];
    for (g, &bus) in tg.dg_buses().iter().enumerate() {
        net_p[bus] += injections.p_dg[g];
        net_q[bus] += injections.q_dg[g];
    }
    for (j, &bus) in tg.load_buses().iter().enumerate() {
        net_p[bus] -= injections.p_load[j];
        net_q[bus] -= injections.q_load[j];
    }

    let mut out = InputTensor::zeros(width);
    for (dst, &v) in out.row_mut(0).iter_mut().zip(&net_p) {
        *dst = Normalizer::scale(normalizer.p, v);
    }
    for (dst, &v) in out.row_mut(1).iter_mut().zip(&net_q) {
        *dst = Normalizer::scale(normalizer.q, v);
    }
    for (i, line) in case.lines.iter().enumerate() {
        if tg.line_closed(i, cfg) {
            out.row_mut(2)[i] = Normalizer::scale(normalizer.r, T::of(line.r));
            out.row_mut(3)[i] = Normalizer::scale(normalizer.x, T::of(line.x));
        }
        if let Some(j) = tg.switch_of_line(i) {
            let f = T::of(f64::from(op_counts[j]) / n_step);
            out.row_mut(4)[i] = f.max(T::zero()).min(T::one());
        }
    }
    out
}

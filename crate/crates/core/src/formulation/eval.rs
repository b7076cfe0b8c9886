//! Closed-form evaluators of the exact network equations. Used by the model
//! builders for coefficients and by the feasibility audit, which must not
//! depend on solver internals.

use crate::network::{AcBranch, Converter, DcBranch, FlatBranch, Network};
use std::collections::BTreeMap;

/// Branch flows as linear functions of (Wi, Wj, WR, WI), where Wi = |Vi|^2
/// and WR + j WI = Vi conj(Vj). Rows: p_from, q_from, p_to, q_to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowCoefs(pub [[f64; 4]; 4]);

impl FlowCoefs {
    pub fn new(g: f64, b: f64, bc: f64, tap: f64, shift: f64) -> Self {
        let t2 = tap * tap;
        let cr = shift.cos() / tap;
        let ci = shift.sin() / tap;
        let bb = b + bc / 2.0;
        FlowCoefs([
            [g / t2, 0.0, -g * cr + b * ci, -g * ci - b * cr],
            [-bb / t2, 0.0, g * ci + b * cr, -g * cr + b * ci],
            [0.0, g, -g * cr - b * ci, -g * ci + b * cr],
            [0.0, -bb, -g * ci + b * cr, g * cr + b * ci],
        ])
    }

    pub fn of(br: &FlatBranch) -> Self {
        FlowCoefs::new(br.g, br.b, br.bc, br.tap, br.shift)
    }

    pub fn apply(&self, w: [f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, row) in self.0.iter().enumerate() {
            out[k] = row.iter().zip(w).map(|(a, b)| a * b).sum();
        }
        out
    }
}

/// Exact pi-model flows (p_ij, q_ij, p_ji, q_ji) of an AC branch; all zero
/// when `z` is false.
pub fn ac_flow_exact(branch: &AcBranch, vm_i: f64, vm_j: f64, va_i: f64, va_j: f64, z: bool) -> [f64; 4] {
    if !z {
        return [0.0; 4];
    }
    let (g, b) = branch.admittance();
    flows_from_voltages(&FlowCoefs::new(g, b, branch.b, branch.tap, branch.shift), vm_i, vm_j, va_i, va_j)
}

pub fn flows_from_voltages(c: &FlowCoefs, vm_i: f64, vm_j: f64, va_i: f64, va_j: f64) -> [f64; 4] {
    let d = va_i - va_j;
    let vv = vm_i * vm_j;
    c.apply([vm_i * vm_i, vm_j * vm_j, vv * d.cos(), vv * d.sin()])
}

/// Power leaving DC bus e on branch d: p g Ue (Ue - Uf).
pub fn dc_flow(branch: &DcBranch, u_e: f64, u_f: f64, z: bool) -> f64 {
    if !z {
        return 0.0;
    }
    f64::from(branch.poles) * branch.conductance() * u_e * (u_e - u_f)
}

/// Converter operating point: AC power into the converter at its internal
/// bus (p_ac, q_ac), DC power into the converter (p_dc), current and the
/// internal bus voltage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConverterPoint {
    pub p_ac: f64,
    pub q_ac: f64,
    pub p_dc: f64,
    pub i: f64,
    pub vm: f64,
}

/// Residuals of the converter equations; every entry is zero (or negative
/// for the bound entries) at a consistent point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConverterResiduals {
    /// p_ac + p_dc - (z a + b I + c I^2)
    pub loss: f64,
    /// p_ac^2 + q_ac^2 - vm^2 I^2
    pub coupling: f64,
    /// Largest violation of the current and power bounds (scaled by z).
    pub bounds: f64,
}

impl ConverterResiduals {
    pub fn max_abs(&self) -> f64 {
        self.loss.abs().max(self.coupling.abs()).max(self.bounds.max(0.0))
    }
}

pub fn converter_loss(conv: &Converter, i: f64, z: bool) -> f64 {
    let zf = if z { 1.0 } else { 0.0 };
    zf * conv.loss_a + conv.loss_b * i + conv.loss_c * i * i
}

fn above(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

pub fn converter_coupling(conv: &Converter, pt: &ConverterPoint, z: bool) -> ConverterResiduals {
    let zf = if z { 1.0 } else { 0.0 };
    let loss = pt.p_ac + pt.p_dc - converter_loss(conv, pt.i, z);
    let coupling = pt.p_ac * pt.p_ac + pt.q_ac * pt.q_ac - pt.vm * pt.vm * pt.i * pt.i;
    let bounds = above(pt.i, 0.0, zf * conv.i_max)
        .max(above(pt.p_ac, zf * conv.pac_min, zf * conv.pac_max))
        .max(above(pt.q_ac, zf * conv.qac_min, zf * conv.qac_max))
        .max(above(pt.p_dc, zf * conv.pdc_min, zf * conv.pdc_max));
    ConverterResiduals { loss, coupling, bounds }
}

/// Generation cost in $/h; `None` if a generator has no value.
pub fn objective_eval(net: &Network, pg: &BTreeMap<usize, f64>) -> Option<f64> {
    net.total_cost(pg)
}

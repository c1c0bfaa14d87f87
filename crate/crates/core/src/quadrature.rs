//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands, plus Gauss–Legendre
//! rules for tensor-product integration.

use serde::{Deserialize, Serialize};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    /// Target error relative to ∫|f| per component.
    pub rel_tol: f64,
    /// Absolute error floor per component.
    pub abs_floor: f64,
    pub max_intervals: usize,
    pub initial_pieces: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_floor: 1e-16, max_intervals: 4000, initial_pieces: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<const N: usize> {
    pub value: [f64; N],
    pub error: [f64; N],
    /// ∫|f| per component, the scale of the relative target.
    pub l1: [f64; N],
    pub intervals: usize,
    pub converged: bool,
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
    l1: [f64; N],
}

fn gk15<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> Panel<N> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut l1 = [0.0; N];
    let fc = f(center);
    for k in 0..N {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
        l1[k] = WGK[7] * fc[k].abs();
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for k in 0..N {
            kron[k] += WGK[j] * (f1[k] + f2[k]);
            l1[k] += WGK[j] * (f1[k].abs() + f2[k].abs());
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * (f1[k] + f2[k]);
            }
        }
    }
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for k in 0..N {
        value[k] = kron[k] * half;
        error[k] = ((kron[k] - gauss[k]) * half).abs();
        l1[k] *= half.abs();
    }
    Panel { a, b, value, error, l1 }
}

/// Integrates every component of `f` over `[a, b]`, bisecting the panel with the worst
/// tolerance-normalized error until every component meets its target or the panel budget is
/// spent.
pub fn integrate<const N: usize, F: Fn(f64) -> [f64; N]>(f: F, a: f64, b: f64, opts: &QuadOptions) -> QuadResult<N> {
    let pieces = opts.initial_pieces.max(1);
    let width = (b - a) / pieces as f64;
    let mut panels: Vec<Panel<N>> =
        (0..pieces).map(|i| gk15(&f, a + i as f64 * width, if i + 1 == pieces { b } else { a + (i + 1) as f64 * width })).collect();

    loop {
        let mut value = [0.0; N];
        let mut error = [0.0; N];
        let mut l1 = [0.0; N];
        for p in &panels {
            for k in 0..N {
                value[k] += p.value[k];
                error[k] += p.error[k];
                l1[k] += p.l1[k];
            }
        }
        let tol: [f64; N] = std::array::from_fn(|k| (opts.rel_tol * l1[k]).max(opts.abs_floor));
        let converged = (0..N).all(|k| error[k] <= tol[k]);
        if converged || panels.len() >= opts.max_intervals {
            return QuadResult { value, error, l1, intervals: panels.len(), converged };
        }
        let worst = panels
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (0..N).map(|k| p.error[k] / tol[k]).fold(0.0, f64::max)))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // panel cannot be split further in floating point
            return QuadResult { value, error, l1, intervals: panels.len() + 1, converged: false };
        }
        panels.push(gk15(&f, p.a, mid));
        panels.push(gk15(&f, mid, p.b));
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels of `m` nodes each.
pub fn composite_rule(a: f64, b: f64, panels: usize, m: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(m);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * m);
    for j in 0..panels {
        let c = a + (j as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((c + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_smooth_functions() {
        let r = integrate(|x| [x.exp(), x.sin()], 0.0, 1.0, &QuadOptions::default());
        assert!(r.converged);
        assert!((r.value[0] - (1f64.exp() - 1.0)).abs() < 1e-14);
        assert!((r.value[1] - (1.0 - 1f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn adapts_to_peaks() {
        let f = |x: f64| [1.0 / (1e-4 + x * x)];
        let r = integrate(f, -1.0, 1.0, &QuadOptions::default());
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!(r.converged);
        assert!((r.value[0] - exact).abs() / exact < 1e-9, "{} vs {exact}", r.value[0]);
    }

    #[test]
    fn reports_budget_exhaustion() {
        let opts = QuadOptions { max_intervals: 5, rel_tol: 1e-15, ..Default::default() };
        let r = integrate(|x: f64| [(50.0 * x).sin() * x.abs().sqrt()], -1.0, 1.0, &opts);
        assert!(!r.converged);
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        for m in [1, 2, 5, 12] {
            let (x, w) = gauss_legendre(m);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            let deg = 2 * m - 1;
            let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((s - exact).abs() < 1e-13, "m={m}");
        }
        let rule = composite_rule(0.0, 3.0, 3, 6);
        let s: f64 = rule.iter().map(|(x, w)| w * (-x).exp()).sum();
        assert!((s - (1.0 - (-3f64).exp())).abs() < 1e-14);
    }
}

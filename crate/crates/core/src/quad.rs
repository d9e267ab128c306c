//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Bisection budget; beyond it the current estimate is returned.
const MAX_INTERVALS: usize = 4000;
const INITIAL_PANELS: usize = 16;

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    /// `∫|f|` estimate, for the round-off floor
    abs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (lo, hi) = (f(center - dx), f(center + dx));
        kronrod += WGK[j] * (lo + hi);
        abs += WGK[j] * (lo.abs() + hi.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (lo + hi);
        }
    }
    Panel {
        a,
        b,
        value: kronrod * half,
        err: ((kronrod - gauss) * half).abs(),
        abs: abs * half.abs(),
    }
}

/// Integrates `f` over `[a, b]`, bisecting the panel with the largest
/// Kronrod error estimate until the total estimate falls below
/// `max(abs_tol, rel_tol · |value|)`, the round-off floor, or the interval
/// budget.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let step = (b - a) / INITIAL_PANELS as f64;
    let mut heap: BinaryHeap<Panel> = (0..INITIAL_PANELS)
        .map(|k| {
            let lo = a + k as f64 * step;
            let hi = if k + 1 == INITIAL_PANELS {
                b
            } else {
                lo + step
            };
            gk15(&f, lo, hi)
        })
        .collect();
    loop {
        let (value, err, abs) = heap.iter().fold((0.0, 0.0, 0.0), |(v, e, s), p| {
            (v + p.value, e + p.err, s + p.abs)
        });
        let floor = 50.0 * f64::EPSILON * abs;
        if err <= abs_tol.max(rel_tol * value.abs()).max(floor) || heap.len() >= MAX_INTERVALS {
            // sum in position order so the result does not depend on heap layout
            let mut panels = heap.into_vec();
            panels.sort_by(|p, q| p.a.total_cmp(&q.a));
            return panels.iter().map(|p| p.value).sum();
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a.min(worst.b) && mid < worst.a.max(worst.b)) {
            // cannot split further; freeze this panel
            heap.push(Panel { err: 0.0, ..worst });
            continue;
        }
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
    }
}

/// Integration at the crate's default accuracy (1e-12 relative, 1e-14 absolute).
pub fn integrate_default<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    integrate(f, a, b, 1e-12, 1e-14)
}

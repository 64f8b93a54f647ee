//! Grid-based cross-checking of coefficient sets against the standing
//! assumptions and their own declared envelopes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

use super::Coefficients;

/// Declared sup and Lipschitz bounds must agree with grid measurements to
/// this relative tolerance.
const ENVELOPE_MATCH_REL: f64 = 0.01;

/// Tolerance for identities that hold exactly (vanishing at a boundary,
/// nonnegativity up to rounding).
const EXACT_TOL: f64 = 1e-12;

/// Finite-difference estimates may exceed a declared derivative bound by
/// this factor before the clause fails.
const FD_SLACK: f64 = 1.05;

/// Absolute slack added to derivative comparisons so that zero bounds on
/// constant coefficients survive rounding.
const FD_ABS_TOL: f64 = 1e-9;

/// The death rate is expected to stay above one; shortfalls warn rather
/// than fail.
const DEATH_FLOOR_TOL: f64 = 1e-9;

/// Multiplicative slack for the declared Hölder modulus of `diff` in `r`.
const HOLDER_SLACK: f64 = 1e-6;

/// Whether a violated clause invalidates the set or merely flags it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Fail,
    Warn,
}

/// Outcome of one validation clause.
#[derive(Clone, Debug)]
pub struct ReportEntry {
    /// Stable identifier, e.g. `"sup.zeta"`.
    pub id: &'static str,
    /// Human-readable statement of the clause.
    pub clause: String,
    pub severity: Severity,
    pub passed: bool,
    /// Grid point `(x, r)` at which the worst value was measured.
    pub witness: Option<(f64, f64)>,
    /// The measured quantity the clause was judged on.
    pub magnitude: f64,
    /// Context such as the declared bound the measurement was compared to.
    pub note: String,
}

/// All clause outcomes for one coefficient set.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub entries: Vec<ReportEntry>,
    /// Grid-measured largest `c` with `zeta ≥ c` and `diff ≥ c x`.
    pub comparison_floor: f64,
}

impl ValidationReport {
    /// True when no `Fail`-severity clause is violated; warnings do not
    /// count against the set.
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed || e.severity == Severity::Warn)
    }

    /// Looks up a clause by identifier.
    pub fn entry(&self, id: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Violated `Fail`-severity clauses.
    pub fn failures(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| !e.passed && e.severity == Severity::Fail)
    }

    /// Violated `Warn`-severity clauses.
    pub fn warnings(&self) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(|e| !e.passed && e.severity == Severity::Warn)
    }
}

/// Axis grid: `n` uniform intervals plus a geometric refinement toward zero
/// so boundary-peaked difference quotients are resolved.
fn axis_grid(hi: f64, n: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=n).map(|i| hi * i as f64 / n as f64).collect();
    for j in 1..=20 {
        xs.push(hi * (0.5f64).powi(j));
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("grid points are finite"));
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * hi);
    xs
}

struct Probe<'a> {
    name: &'static str,
    eval: &'a dyn Fn(f64, f64) -> f64,
    sup: f64,
    lip: f64,
    d1x: Option<f64>,
    d1r: Option<f64>,
    d2x: Option<f64>,
}

/// Checks a coefficient set against the standing assumptions on its working
/// window, using `grid_n` uniform intervals per axis (plus boundary
/// refinement).
///
/// Every clause is reported whether it passes or fails; a failed `Fail`
/// clause means the set leaves the assumption class, a failed `Warn` clause
/// (the unit death floor) is informational.
pub fn validate_coefficients(c: &dyn Coefficients, grid_n: usize) -> ValidationReport {
    let b = *c.bounds();
    let xs = axis_grid(b.x_max, grid_n.max(16));
    let rs = axis_grid(b.r_bar, grid_n.max(16));
    let deriv = c.derivative_bounds();

    let zeta = |x: f64, r: f64| c.zeta(x, r);
    let diff = |x: f64, r: f64| c.diff(x, r);
    let birth = |x: f64, r: f64| c.birth(x, r);
    let death = |x: f64, _r: f64| c.death(x);
    let chi = |x: f64, r: f64| c.chi(x, r);

    let probes = [
        Probe {
            name: "zeta",
            eval: &zeta,
            sup: b.zeta_sup,
            lip: b.zeta_lip,
            d1x: deriv.map(|d| d.zeta_dx),
            d1r: deriv.map(|d| d.zeta_dr),
            d2x: deriv.map(|d| d.zeta_dxx),
        },
        Probe {
            name: "diff",
            eval: &diff,
            sup: b.diff_sup,
            lip: b.diff_lip,
            d1x: deriv.map(|d| d.diff_dx),
            d1r: deriv.map(|d| d.diff_dr),
            d2x: deriv.map(|d| d.diff_dxx),
        },
        Probe {
            name: "birth",
            eval: &birth,
            sup: b.birth_sup,
            lip: b.birth_lip,
            d1x: deriv.map(|d| d.birth_dx),
            d1r: deriv.map(|d| d.birth_dr),
            d2x: deriv.map(|d| d.birth_dxx),
        },
        Probe {
            name: "death",
            eval: &death,
            sup: b.death_sup,
            lip: b.death_lip,
            d1x: deriv.map(|d| d.death_dx),
            d1r: Some(0.0),
            d2x: deriv.map(|d| d.death_dxx),
        },
        Probe {
            name: "chi",
            eval: &chi,
            sup: b.chi_sup,
            lip: b.chi_lip,
            d1x: deriv.map(|d| d.chi_dx),
            d1r: deriv.map(|d| d.chi_dr),
            d2x: deriv.map(|d| d.chi_dxx),
        },
    ];

    let mut entries = Vec::new();

    static SUP_IDS: [&str; 5] = ["sup.zeta", "sup.diff", "sup.birth", "sup.death", "sup.chi"];
    static LIP_IDS: [&str; 5] = ["lip.zeta", "lip.diff", "lip.birth", "lip.death", "lip.chi"];
    static D1_IDS: [&str; 5] =
        ["deriv1.zeta", "deriv1.diff", "deriv1.birth", "deriv1.death", "deriv1.chi"];
    static D2_IDS: [&str; 5] =
        ["deriv2.zeta", "deriv2.diff", "deriv2.birth", "deriv2.death", "deriv2.chi"];

    for (k, p) in probes.iter().enumerate() {
        // Declared sup against the grid maximum of |f|.
        let mut measured = 0.0;
        let mut arg = (0.0, 0.0);
        for &x in &xs {
            for &r in &rs {
                let v = (p.eval)(x, r).abs();
                if v > measured {
                    measured = v;
                    arg = (x, r);
                }
            }
        }
        let passed = if p.sup == 0.0 {
            measured <= EXACT_TOL
        } else {
            measured <= p.sup * (1.0 + 1e-9) && measured >= p.sup * (1.0 - ENVELOPE_MATCH_REL)
        };
        entries.push(ReportEntry {
            id: SUP_IDS[k],
            clause: format!("declared sup bound for {} matches the grid maximum", p.name),
            severity: Severity::Fail,
            passed,
            witness: Some(arg),
            magnitude: measured,
            note: format!("declared {}", p.sup),
        });

        // Declared Lipschitz bound against consecutive difference quotients
        // along both axes.
        let mut quot = 0.0;
        let mut qarg = (0.0, 0.0);
        for &r in &rs {
            for w in xs.windows(2) {
                let q = ((p.eval)(w[1], r) - (p.eval)(w[0], r)).abs() / (w[1] - w[0]);
                if q > quot {
                    quot = q;
                    qarg = (w[0], r);
                }
            }
        }
        for &x in &xs {
            for w in rs.windows(2) {
                let q = ((p.eval)(x, w[1]) - (p.eval)(x, w[0])).abs() / (w[1] - w[0]);
                if q > quot {
                    quot = q;
                    qarg = (x, w[0]);
                }
            }
        }
        let passed = if p.lip == 0.0 {
            quot <= EXACT_TOL
        } else {
            quot <= p.lip * (1.0 + 1e-9) && quot >= p.lip * (1.0 - ENVELOPE_MATCH_REL)
        };
        entries.push(ReportEntry {
            id: LIP_IDS[k],
            clause: format!(
                "declared Lipschitz bound for {} matches the largest grid quotient",
                p.name
            ),
            severity: Severity::Fail,
            passed,
            witness: Some(qarg),
            magnitude: quot,
            note: format!("declared {}", p.lip),
        });

        // First derivatives by central differences against declared bounds
        // (the joint Lipschitz bound when no derivative bounds are declared).
        let h1x = b.x_max * 1e-6;
        let h1r = b.r_bar * 1e-6;
        let fd_x_points: Vec<f64> = core::iter::once(h1x)
            .chain((1..16).map(|i| b.x_max * i as f64 / 16.0))
            .collect();
        let fd_r_points: Vec<f64> = core::iter::once(h1r)
            .chain((1..16).map(|i| b.r_bar * i as f64 / 16.0))
            .collect();
        let r_samples: Vec<f64> = (0..=8).map(|i| b.r_bar * i as f64 / 8.0).collect();
        let x_samples: Vec<f64> = (0..=8).map(|i| b.x_max * i as f64 / 8.0).collect();

        let mut fd1 = 0.0;
        let mut fd1_arg = (0.0, 0.0);
        for &x in &fd_x_points {
            if x - h1x < 0.0 || x + h1x > b.x_max {
                continue;
            }
            for &r in &r_samples {
                let q = (((p.eval)(x + h1x, r) - (p.eval)(x - h1x, r)) / (2.0 * h1x)).abs();
                if q > fd1 {
                    fd1 = q;
                    fd1_arg = (x, r);
                }
            }
        }
        // Central differences carry rounding noise of order eps * sup / h
        // (first order) and eps * sup / h^2 (second order); the absolute
        // slack must cover it so exactly-constant derivatives pass.
        let noise1 = 1e-13 * p.sup.max(1.0) / h1x.min(h1r);
        let bound_x = p.d1x.unwrap_or(p.lip);
        let mut d1_ok = fd1 <= bound_x * FD_SLACK + FD_ABS_TOL + noise1;
        let mut fd1r = 0.0;
        for &r in &fd_r_points {
            if r - h1r < 0.0 || r + h1r > b.r_bar {
                continue;
            }
            for &x in &x_samples {
                let q = (((p.eval)(x, r + h1r) - (p.eval)(x, r - h1r)) / (2.0 * h1r)).abs();
                if q > fd1r {
                    fd1r = q;
                }
            }
        }
        let bound_r = p.d1r.unwrap_or(p.lip);
        d1_ok = d1_ok && fd1r <= bound_r * FD_SLACK + FD_ABS_TOL + noise1;
        entries.push(ReportEntry {
            id: D1_IDS[k],
            clause: format!("first derivatives of {} stay within their declared bounds", p.name),
            severity: Severity::Fail,
            passed: d1_ok,
            witness: Some(fd1_arg),
            magnitude: fd1.max(fd1r),
            note: format!("declared d/dx {} and d/dr {}", bound_x, bound_r),
        });

        // Second x-derivative by central differences.
        let h2 = b.x_max * 1e-4;
        let mut fd2 = 0.0;
        let mut fd2_arg = (0.0, 0.0);
        for &x in &fd_x_points {
            let x = x.max(h2);
            if x + h2 > b.x_max {
                continue;
            }
            for &r in &r_samples {
                let q = (((p.eval)(x + h2, r) - 2.0 * (p.eval)(x, r) + (p.eval)(x - h2, r))
                    / (h2 * h2))
                    .abs();
                if q > fd2 {
                    fd2 = q;
                    fd2_arg = (x, r);
                }
            }
        }
        let noise2 = 1e-13 * p.sup.max(1.0) / (h2 * h2);
        let (d2_ok, d2_note) = match p.d2x {
            Some(bound) => (
                fd2 <= bound * FD_SLACK + FD_ABS_TOL + noise2,
                format!("declared d2/dx2 {}", bound),
            ),
            None => (fd2.is_finite(), String::from("no declared second-derivative bound")),
        };
        entries.push(ReportEntry {
            id: D2_IDS[k],
            clause: format!(
                "second x-derivative of {} stays within its declared bound",
                p.name
            ),
            severity: Severity::Fail,
            passed: d2_ok,
            witness: Some(fd2_arg),
            magnitude: fd2,
            note: d2_note,
        });
    }

    // Nonnegativity of the rates and the diffusion coefficient.
    static NONNEG: [(&str, usize); 4] = [
        ("nonneg.diff", 1),
        ("nonneg.birth", 2),
        ("nonneg.death", 3),
        ("nonneg.chi", 4),
    ];
    for &(id, k) in &NONNEG {
        let p = &probes[k];
        let mut min = f64::INFINITY;
        let mut arg = (0.0, 0.0);
        for &x in &xs {
            for &r in &rs {
                let v = (p.eval)(x, r);
                if v < min {
                    min = v;
                    arg = (x, r);
                }
            }
        }
        entries.push(ReportEntry {
            id,
            clause: format!("{} is nonnegative on the working window", p.name),
            severity: Severity::Fail,
            passed: min >= -EXACT_TOL,
            witness: Some(arg),
            magnitude: min,
            note: String::new(),
        });
    }

    // Boundary behavior.
    let mut worst = 0.0;
    let mut arg = (0.0, 0.0);
    for &r in &rs {
        let v = c.diff(0.0, r).abs();
        if v > worst {
            worst = v;
            arg = (0.0, r);
        }
    }
    entries.push(ReportEntry {
        id: "boundary.diff_degenerate",
        clause: String::from("diff(0, r) = 0 for every resource level"),
        severity: Severity::Fail,
        passed: worst <= EXACT_TOL,
        witness: Some(arg),
        magnitude: worst,
        note: if c.degenerate_at_zero() {
            String::new()
        } else {
            String::from("set does not declare the boundary degenerate")
        },
    });

    let mut min = f64::INFINITY;
    let mut arg = (0.0, 0.0);
    for &r in &rs {
        let v = c.zeta(0.0, r);
        if v < min {
            min = v;
            arg = (0.0, r);
        }
    }
    entries.push(ReportEntry {
        id: "boundary.zeta_positive",
        clause: String::from("zeta(0, r) > 0, drift pushes away from the boundary"),
        severity: Severity::Fail,
        passed: min > 0.0,
        witness: Some(arg),
        magnitude: min,
        note: String::new(),
    });

    let mut worst = 0.0;
    let mut arg = (0.0, 0.0);
    for &x in &xs {
        let v = c.chi(x, 0.0).abs();
        if v > worst {
            worst = v;
            arg = (x, 0.0);
        }
    }
    entries.push(ReportEntry {
        id: "resource.chi_vanishes_at_zero",
        clause: String::from("chi(x, 0) = 0, nothing is consumed from an empty reservoir"),
        severity: Severity::Fail,
        passed: worst <= EXACT_TOL,
        witness: Some(arg),
        magnitude: worst,
        note: String::new(),
    });

    entries.push(ReportEntry {
        id: "resource.inflow_positive",
        clause: String::from("resource inflow r_in is positive"),
        severity: Severity::Fail,
        passed: c.r_in() > 0.0,
        witness: None,
        magnitude: c.r_in(),
        note: String::new(),
    });

    // Interior nondegeneracy of the diffusion.
    let mut min = f64::INFINITY;
    let mut arg = (0.0, 0.0);
    for &x in xs.iter().filter(|&&x| x > 0.0) {
        for &r in &rs {
            let v = c.diff(x, r);
            if v < min {
                min = v;
                arg = (x, r);
            }
        }
    }
    entries.push(ReportEntry {
        id: "interior.diff_positive",
        clause: String::from("diff(x, r) > 0 for x > 0"),
        severity: Severity::Fail,
        passed: min > 0.0,
        witness: Some(arg),
        magnitude: min,
        note: String::new(),
    });

    // Comparison floor: zeta ≥ c and diff ≥ c x for the largest feasible c.
    let mut zeta_floor = f64::INFINITY;
    let mut zarg = (0.0, 0.0);
    for &x in &xs {
        for &r in &rs {
            let v = c.zeta(x, r);
            if v < zeta_floor {
                zeta_floor = v;
                zarg = (x, r);
            }
        }
    }
    entries.push(ReportEntry {
        id: "comparison.zeta_floor",
        clause: String::from("zeta admits a positive lower constant"),
        severity: Severity::Fail,
        passed: zeta_floor > 0.0,
        witness: Some(zarg),
        magnitude: zeta_floor,
        note: String::new(),
    });

    let mut ratio_floor = f64::INFINITY;
    let mut rarg = (0.0, 0.0);
    for &x in xs.iter().filter(|&&x| x > 0.0) {
        for &r in &rs {
            let v = c.diff(x, r) / x;
            if v < ratio_floor {
                ratio_floor = v;
                rarg = (x, r);
            }
        }
    }
    entries.push(ReportEntry {
        id: "comparison.diff_floor",
        clause: String::from("diff / x admits a positive lower constant"),
        severity: Severity::Fail,
        passed: ratio_floor > 0.0,
        witness: Some(rarg),
        magnitude: ratio_floor,
        note: String::new(),
    });
    let comparison_floor = zeta_floor.min(ratio_floor);

    // Declared Hölder modulus of diff in the resource argument.
    let (holder_ok, holder_mag, holder_arg, holder_note) = match c.holder_in_r() {
        Some(h) => {
            let mut worst = 0.0;
            let mut arg = (0.0, 0.0);
            let mut ok = true;
            for &x in &xs {
                let env = h.c * (1.0 + x.powf(h.k));
                for w in rs.windows(2) {
                    let gap = (c.diff(x, w[1]) - c.diff(x, w[0])).abs();
                    let allowed = env * (w[1] - w[0]).powf(h.beta);
                    if gap > worst {
                        worst = gap;
                        arg = (x, w[0]);
                    }
                    if gap > allowed * (1.0 + HOLDER_SLACK) + EXACT_TOL {
                        ok = false;
                    }
                }
                let gap = (c.diff(x, b.r_bar) - c.diff(x, 0.0)).abs();
                if gap > env * b.r_bar.powf(h.beta) * (1.0 + HOLDER_SLACK) + EXACT_TOL {
                    ok = false;
                }
            }
            (ok, worst, Some(arg), format!("declared c {}, k {}, beta {}", h.c, h.k, h.beta))
        }
        None => (true, 0.0, None, String::from("no declared modulus")),
    };
    entries.push(ReportEntry {
        id: "holder.diff_in_r",
        clause: String::from("diff is Hölder in r within its declared modulus"),
        severity: Severity::Fail,
        passed: holder_ok,
        witness: holder_arg,
        magnitude: holder_mag,
        note: holder_note,
    });

    // Unit death floor, informational only.
    let mut min = f64::INFINITY;
    let mut arg = (0.0, 0.0);
    for &x in &xs {
        let v = c.death(x);
        if v < min {
            min = v;
            arg = (x, 0.0);
        }
    }
    entries.push(ReportEntry {
        id: "warn.death_floor",
        clause: String::from("death rate stays at or above one"),
        severity: Severity::Warn,
        passed: min >= 1.0 - DEATH_FLOOR_TOL,
        witness: Some(arg),
        magnitude: min,
        note: String::new(),
    });

    ValidationReport { entries, comparison_floor }
}

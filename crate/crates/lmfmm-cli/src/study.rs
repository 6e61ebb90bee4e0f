use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use lmfmm::expansions::{phi_basis_parts, psi_basis_evanescent, psi_basis_parts, BasisParts, Point2};
use lmfmm::greens::make_impedance_scattered;
use lmfmm::sommerfeld::{Contour2Tail, QuadStudy};
use lmfmm::special_functions::{bessel_j, hankel1};
use lmfmm::validation::{adaptive_reference, Contour};
use num_complex::Complex64;

use crate::io::num;
use crate::kernel::{KernelArgs, KernelDefaults, KernelKind};
use crate::CliError;

fn output(path: &Option<PathBuf>) -> Result<csv::Writer<Box<dyn Write>>, CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(
            std::fs::File::create(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Usage(format!("writing csv: {e}"))
}

#[derive(Debug, Clone, Args)]
pub struct QuadArgs {
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub x: f64,
    #[arg(long, default_value_t = 0.1)]
    pub y: f64,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    /// Shift of the deformed contours
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Largest node count in the sweep, starting from 1
    #[arg(long, default_value_t = 250)]
    pub n_max: usize,
    /// Output file (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn quad_study(a: &QuadArgs) -> Result<(), CliError> {
    if a.n_max == 0 {
        return Err(CliError::Usage("--n-max must be at least 1".into()));
    }
    let s = QuadStudy { x: a.x, y: a.y, k: a.k, c: a.c, alpha: a.alpha };
    let spec = make_impedance_scattered(a.k, a.alpha)?;
    let tail = Contour2Tail::new(&spec, a.x, a.y, a.c)?;
    let zero = Complex64::new(0.0, 0.0);
    let target = 1e-15;
    let ev = adaptive_reference(|t| s.integrand(t), Contour::Ray { from: zero, direction: Complex64::new(1.0, 0.0) }, target)?;
    let iv1 = adaptive_reference(|t| s.integrand(t), Contour::Segment { from: zero, to: Complex64::new(a.c, 0.0) }, target)?;
    let f2 = |u: Complex64| tail.integrand(u).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
    let start = Complex64::new(0.0, -(a.y.atan2(a.x)).cos());
    let iv2 = adaptive_reference(f2, Contour::Segment { from: start, to: Complex64::new(a.c, 0.0) }, target)?;
    let iii2 = adaptive_reference(f2, Contour::Ray { from: Complex64::new(a.c, 0.0), direction: Complex64::new(1.0, 0.0) }, target)?;
    for (name, r) in [("evanescent", &ev), ("segmentIV-1", &iv1), ("segmentIV-2", &iv2), ("contour2", &iii2)] {
        eprintln!("reference {name}: {} {} (estimated error {:e})", num(r.value.re), num(r.value.im), r.estimated_error);
    }
    let iii1 = ev.value - iv1.value;
    let mut w = output(&a.out)?;
    w.write_record(["representation", "n", "abs_error"]).map_err(csv_err)?;
    type Rule<'a> = Box<dyn Fn(usize) -> lmfmm::Result<Complex64> + 'a>;
    let reps: [(&str, Rule, Complex64); 5] = [
        ("original", Box::new(|n| s.original(n)), ev.value),
        ("contour1", Box::new(|n| s.contour1_ray(n)), iii1),
        ("contour2", Box::new(|n| s.contour2_ray(n)), iii2.value),
        ("segmentIV-1", Box::new(|n| s.contour1_segment(n)), iv1.value),
        ("segmentIV-2", Box::new(|n| s.contour2_segment(n)), iv2.value),
    ];
    for (name, rule, reference) in &reps {
        for n in 1..=a.n_max {
            let e = (rule(n)? - reference).norm();
            w.write_record([name.to_string(), n.to_string(), num(e)]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    /// Multipole basis terms `J_p(k0 r) Φ_p` (impedance default)
    MultipoleRatio,
    /// Local basis terms `J_p(k r) Ψ_p`, evanescent part (three-layer default)
    LocalRatio,
    /// Free-space terms `J_p(k r) H_p(k ρ)`
    FreeSpace,
}

#[derive(Debug, Clone, Args)]
pub struct ExpansionArgs {
    #[arg(long, value_enum, default_value_t = StudyKind::MultipoleRatio)]
    pub study: StudyKind,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Horizontal distance between the far point and the box centre
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub dx: f64,
    /// Modified vertical distance between the far point and the box centre
    #[arg(long, default_value_t = 3.0)]
    pub dy: f64,
    /// Distance between the expanded point and the box centre
    #[arg(long, default_value_t = 1.5)]
    pub r: f64,
    /// Height of the box centre (default: inside the layer, matching --dy)
    #[arg(long, allow_hyphen_values = true)]
    pub yc: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub p_min: Option<i64>,
    #[arg(long, default_value_t = 60)]
    pub p_max: i64,
    /// Output file (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Row {
    term: f64,
    propagating: f64,
    evanescent: f64,
    status: String,
}

fn nan_row(e: impl std::fmt::Display) -> Row {
    Row { term: f64::NAN, propagating: f64::NAN, evanescent: f64::NAN, status: e.to_string() }
}

pub fn expansion_study(a: &ExpansionArgs) -> Result<(), CliError> {
    let p_min = a.p_min.unwrap_or(match a.study {
        StudyKind::MultipoleRatio => -a.p_max,
        _ => 0,
    });
    if p_min > a.p_max {
        return Err(CliError::Usage(format!("empty order range {p_min}..={}", a.p_max)));
    }
    if !(a.r > 0.0 && a.dy > 0.0) {
        return Err(CliError::Usage("--r and --dy must be positive".into()));
    }
    let rows: Vec<(i64, Row)> = match a.study {
        StudyKind::FreeSpace => {
            let k = a.kernel.k.unwrap_or(1.0);
            let rho = a.dx.hypot(a.dy);
            (p_min - 1..=a.p_max + 1)
                .map(|p| {
                    let row = match (bessel_j(p, k * a.r), hankel1(p, k * rho)) {
                        (Ok(j), Ok(h)) => {
                            let t = j.abs() * h.norm();
                            Row { term: t, propagating: f64::NAN, evanescent: f64::NAN, status: "ok".into() }
                        }
                        (Err(e), _) | (_, Err(e)) => nan_row(e),
                    };
                    (p, row)
                })
                .collect()
        }
        StudyKind::MultipoleRatio | StudyKind::LocalRatio => {
            let local = a.study == StudyKind::LocalRatio;
            let defaults = if local {
                KernelDefaults {
                    kind: KernelKind::ThreeLayer(lmfmm::greens::ThreeLayerComponent::S2t),
                    k123: [1.0, 3.0, 1.0],
                    ..Default::default()
                }
            } else {
                KernelDefaults { k: 0.1, ..Default::default() }
            };
            let kern = a.kernel.resolve(defaults)?;
            let spec = kern.spec;
            // Far point and box centre with canonical separation dy.
            let (far, centre): (Point2, Point2) = if local {
                let yc = a.yc.unwrap_or_else(|| kern.target_centre(0.5 * a.dy));
                let b = spec.target_height(yc) - a.dy;
                ([a.dx, kern.source_for(b)], [0.0, yc])
            } else {
                let yc = a.yc.unwrap_or(0.5 * a.dy);
                let at = spec.source_height(yc) + a.dy;
                ([a.dx, kern.target_for(at)], [0.0, yc])
            };
            if local {
                spec.check_target(centre[1])?;
                spec.check_source(far[1])?;
            } else {
                spec.check_source(centre[1])?;
                spec.check_target(far[1])?;
            }
            let kj = if local { spec.k_target } else { spec.k_source };
            let poles = spec.sigma.has_real_axis_poles();
            (p_min - 1..=a.p_max + 1)
                .map(|p| {
                    let j = match bessel_j(p, kj * a.r) {
                        Ok(j) => j.abs(),
                        Err(e) => return (p, nan_row(e)),
                    };
                    let parts: lmfmm::Result<BasisParts> = match (local, poles) {
                        (true, true) => psi_basis_evanescent(p, far, &spec, centre)
                            .map(|e| BasisParts { propagating: Complex64::new(f64::NAN, f64::NAN), evanescent: e }),
                        (true, false) => psi_basis_parts(p, far, &spec, centre),
                        (false, true) => lmfmm::expansions::phi_basis_evanescent(p, far, &spec, centre)
                            .map(|e| BasisParts { propagating: Complex64::new(f64::NAN, f64::NAN), evanescent: e }),
                        (false, false) => phi_basis_parts(p, far, &spec, centre),
                    };
                    let row = match parts {
                        Ok(b) => {
                            let basis = if local || poles { b.evanescent } else { b.total() };
                            Row {
                                term: j * basis.norm(),
                                propagating: b.propagating.norm(),
                                evanescent: b.evanescent.norm(),
                                status: "ok".into(),
                            }
                        }
                        Err(e) => nan_row(e),
                    };
                    (p, row)
                })
                .collect()
        }
    };
    eprintln!("r/rho = {}", num(a.r / a.dx.hypot(a.dy)));
    let term = |p: i64| rows.iter().find(|(q, _)| *q == p).map(|(_, r)| r.term).unwrap_or(f64::NAN);
    let mut w = output(&a.out)?;
    w.write_record(["p", "term", "ratio", "propagating", "evanescent", "status"]).map_err(csv_err)?;
    for (p, row) in rows.iter().filter(|(p, _)| (p_min..=a.p_max).contains(p)) {
        // Ratio of the next term away from p = 0.
        let next = if *p >= 0 { p + 1 } else { p - 1 };
        let ratio = term(next) / row.term;
        w.write_record([
            p.to_string(),
            num(row.term),
            num(ratio),
            num(row.propagating),
            num(row.evanescent),
            row.status.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))
}

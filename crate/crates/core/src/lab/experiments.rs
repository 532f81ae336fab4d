//! The experiment kinds. Each returns its CSV tables and a metrics object.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{
    CertifyParams, ConjugacyParams, ExperimentParams, ExponentsParams, RigidityParams, StripExperimentParams,
    Tolerances, UbdParams,
};
use crate::conjugacy::{diagnose, estimate_holder_along_leaf, Arclength, ConjugacyField, ConjugacyPair};
use crate::error::Result;
use crate::leaf_measures::{
    growth_bound, growth_rows, pushforward_leaf_measure, strip_volume_measure, theorem_b_verdict, ubd_constant,
    BoxScale, DensityParams, FiberImage, LeafDensity, Strip, StripParams, UbdSpec, Verdict,
};
use crate::periodic_data::{
    attach_livshitz, birkhoff_exponent, birkhoff_stable_exponent, livshitz_obstruction, periodic_points_linear,
    specialness_diagnostic, ShootingConfig,
};
use crate::splitting::{grow_leaf_segment, quasi_isometry_constant, Flavor};
use crate::torus_map::{certify_hyperbolicity, CertificateParams, ToralEndomorphism};
use crate::Vec2;

/// Livshitz obstruction below which periodic data count as those of `L`.
pub const LIVSHITZ_TOL: f64 = 1e-6;
/// Hölder slopes in this band count as Lipschitz along unstable leaves.
pub const SMOOTH_SLOPE_BAND: (f64, f64) = (0.98, 1.02);
/// Relative roundoff allowed on the growth-ratio band, which is `[1, 1]` for `L`.
pub const RATIO_SLACK: f64 = 1e-9;

pub struct Output {
    /// `(file suffix, CSV body with header)`; the empty suffix is `<name>.csv`.
    pub tables: Vec<(String, String)>,
    pub metrics: Value,
}

pub struct Context<'a> {
    pub f: &'a ToralEndomorphism,
    pub tol: &'a Tolerances,
    /// Substream seed of this experiment.
    pub seed: u64,
}

impl Context<'_> {
    fn shooting(&self) -> ShootingConfig {
        ShootingConfig {
            newton_tol: self.tol.newton_tol,
            ..ShootingConfig::default()
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

pub fn run_experiment(ctx: &Context, params: &ExperimentParams) -> Result<Output> {
    match params {
        ExperimentParams::Certify(p) => certify(ctx, p),
        ExperimentParams::Exponents(p) => exponents(ctx, p),
        ExperimentParams::Conjugacy(p) => conjugacy(ctx, p),
        ExperimentParams::Rigidity(p) => rigidity(ctx, p),
        ExperimentParams::Ubd(p) => ubd(ctx, p),
        ExperimentParams::Strip(p) => strip(ctx, p),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e15)`.
fn num(v: f64) -> String {
    // prints -0 as 0
    let v = v + 0.0;
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn extremes(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn certify(ctx: &Context, p: &CertifyParams) -> Result<Output> {
    let cert = certify_hyperbolicity(
        ctx.f,
        &CertificateParams {
            grid_n: ctx.tol.cert_grid,
            theta_u: p.theta_u,
            theta_s: p.theta_s,
        },
    )?;
    let mut csv = String::from("class,theta_u,theta_s,mu_u,mu_s,grid_n,cone_margin_u,cone_margin_s,det_margin\n");
    let _ = writeln!(
        csv,
        "{:?},{},{},{},{},{},{},{},{}",
        cert.class,
        num(cert.theta_u),
        num(cert.theta_s),
        num(cert.mu_u),
        num(cert.mu_s),
        cert.grid_n,
        num(cert.cone_margin_u),
        num(cert.cone_margin_s),
        num(cert.det_margin)
    );
    Ok(Output {
        tables: vec![(String::new(), csv)],
        metrics: to_value(&cert),
    })
}

fn exponents(ctx: &Context, p: &ExponentsParams) -> Result<Output> {
    let f = ctx.f;
    let report = specialness_diagnostic(f, p.max_period, &ctx.shooting())?;
    let counts = (1..=p.max_period as u32)
        .map(|n| Ok(periodic_points_linear(f.linear(), n)?.len()))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ctx.rng();
    let x0 = Vec2::new(rng.random(), rng.random());
    let u = birkhoff_exponent(f, &x0, p.birkhoff_samples, p.blocks)?;
    let s = birkhoff_stable_exponent(f, &x0, p.birkhoff_samples, p.blocks)?;
    let eig = f.linear().hyperbolic_eigen()?;

    let mut csv = String::from("source,period,orbit_id,x0_1,x0_2,lambda_u,lambda_s,mean_log_jacobian,stderr_u,stderr_s\n");
    for r in &report.orbits {
        let e = &r.exponents;
        let _ = writeln!(
            csv,
            "periodic,{},{},{},{},{},{},{},,",
            r.period,
            r.orbit_id,
            num(r.x0.x),
            num(r.x0.y),
            num(e.lambda_u),
            num(e.lambda_s),
            num(e.mean_log_jacobian)
        );
    }
    let _ = writeln!(
        csv,
        "birkhoff,,,{},{},{},{},,{},{}",
        num(x0.x),
        num(x0.y),
        num(u.mean),
        num(s.mean),
        num(u.stderr),
        num(s.stderr)
    );
    let (lu_min, lu_max) = extremes(report.orbits.iter().map(|r| r.exponents.lambda_u));
    let (ls_min, ls_max) = extremes(report.orbits.iter().map(|r| r.exponents.lambda_s));
    let sum_residual = report.orbits.iter().map(|r| r.exponents.sum_residual()).fold(0.0, f64::max);
    Ok(Output {
        tables: vec![(String::new(), csv)],
        metrics: json!({
            "periodic_points": counts,
            "orbits": report.orbits.len(),
            "failures": report.failures.len(),
            "lambda_u_min": lu_min,
            "lambda_u_max": lu_max,
            "lambda_s_min": ls_min,
            "lambda_s_max": ls_max,
            "max_sum_residual": sum_residual,
            "log_lambda_u_linear": eig.lambda_u.abs().ln(),
            "log_lambda_s_linear": eig.lambda_s.abs().ln(),
            "birkhoff_u": u.mean,
            "birkhoff_u_stderr": u.stderr,
            "birkhoff_s": s.mean,
            "birkhoff_s_stderr": s.stderr,
            "specialness": report.verdict,
        }),
    })
}

fn conjugacy(ctx: &Context, p: &ConjugacyParams) -> Result<Output> {
    let field = ConjugacyField::build(ctx.f, ctx.tol.conjugacy_tol)?;
    let d = diagnose(&field, p.points, ctx.seed)?;
    let mut rng = ctx.rng();
    let x = Vec2::new(rng.random(), rng.random());
    let seg = grow_leaf_segment(ctx.f, &x, Flavor::Unstable, 0.5, 1e-2)?;
    let leaf_image = field.leaf_image_check(&seg)?;
    let mut csv = String::from(
        "samples,max_residual,sup_u,sup_bound,periodicity_defect,max_inverse_residual,ground_truth_error,leaf_image_defect\n",
    );
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{}",
        d.samples,
        num(d.max_residual),
        num(d.sup_u),
        num(d.sup_bound),
        num(d.periodicity_defect),
        num(d.max_inverse_residual),
        d.ground_truth_error.map(num).unwrap_or_default(),
        num(leaf_image)
    );
    let mut metrics = to_value(&d);
    metrics["leaf_image_defect"] = json!(leaf_image);
    metrics["residual_within_tolerance"] = json!(d.max_residual < 10.0 * ctx.tol.conjugacy_tol);
    Ok(Output {
        tables: vec![(String::new(), csv)],
        metrics,
    })
}

/// Reading of the smooth-rigidity implication: periodic data equal to those
/// of `L` force a smooth conjugacy.
fn theorem_a_verdict(livshitz: f64, slope: f64, flagged: bool) -> Verdict {
    let hypothesis = livshitz < LIVSHITZ_TOL;
    let smooth = (SMOOTH_SLOPE_BAND.0..=SMOOTH_SLOPE_BAND.1).contains(&slope) && !flagged;
    match (hypothesis, smooth) {
        (true, true) => Verdict::Consistent,
        (true, false) => Verdict::Inconsistent,
        (false, false) => Verdict::ContrapositiveConsistent,
        (false, true) => Verdict::Inconclusive,
    }
}

fn rigidity(ctx: &Context, p: &RigidityParams) -> Result<Output> {
    let f = ctx.f;
    let cfg = ctx.shooting();
    let lin = f.linearization();
    let mut report = specialness_diagnostic(f, p.max_period, &cfg)?;
    let pair = ConjugacyPair::build(f, &lin, ctx.tol.conjugacy_tol)?;
    let liv = livshitz_obstruction(f, &lin, Some(&pair), p.max_period, &cfg)?;
    attach_livshitz(&mut report, &liv);

    let mut rng = ctx.rng();
    let x = Vec2::new(rng.random(), rng.random());
    let seg = grow_leaf_segment(f, &x, Flavor::Unstable, p.leaf_halflength, 1e-3)?;
    let scales: Vec<f64> = (p.holder_min_level..=p.holder_max_level).rev().map(|k| 2f64.powi(-k)).collect();
    let holder = estimate_holder_along_leaf(&pair.hf, &seg, &Arclength, &scales, p.bases)?;

    let mut hcsv = String::from("scale,max_distortion,mean_distortion,residual,local_slope,defect\n");
    for i in 0..holder.scales.len() {
        let (slope, defect) = if i == 0 {
            (String::new(), String::new())
        } else {
            (num(holder.slopes[i - 1]), num(holder.defects[i - 1]))
        };
        let _ = writeln!(
            hcsv,
            "{},{},{},{},{},{}",
            num(holder.scales[i]),
            num(holder.max_distortion[i]),
            num(holder.mean_distortion[i]),
            num(holder.residuals[i]),
            slope,
            defect
        );
    }
    let flagged = holder.low_fine_slope || holder.non_stabilizing;
    Ok(Output {
        tables: vec![(String::new(), report.to_csv()), ("_holder".into(), hcsv)],
        metrics: json!({
            "livshitz_obstruction": liv.value,
            "livshitz_stable": liv.stable_value,
            "stable_spread": report.stable_spread,
            "unstable_spread": report.unstable_spread,
            "spread_threshold": report.spread_threshold,
            "specialness": report.verdict,
            "orbit_failures": report.failures.len(),
            "holder_slope": holder.fit.slope,
            "holder_low_fine_slope": holder.low_fine_slope,
            "holder_non_stabilizing": holder.non_stabilizing,
            "theorem_a": theorem_a_verdict(liv.value, holder.fit.slope, flagged),
        }),
    })
}

/// Worst relative residual of `ρ(Fx, Fy)·D(y)/D(x) = ρ(x, y)` over same-leaf
/// pairs on seeded unstable leaves.
fn rho_cocycle_residual(f: &ToralEndomorphism, params: DensityParams, pairs: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    const PER_LEAF: usize = 10;
    let mut worst = 0.0f64;
    for _ in 0..pairs.div_ceil(PER_LEAF) {
        let x0 = Vec2::new(rng.random(), rng.random());
        let seg = grow_leaf_segment(f, &x0, Flavor::Unstable, 0.3, 2e-3)?;
        let image = grow_leaf_segment(f, &f.lift(&x0), Flavor::Unstable, 1.5, 5e-3)?;
        let src = LeafDensity::new(f, &seg, params)?;
        let dst = LeafDensity::new(f, &image, params)?;
        for _ in 0..PER_LEAF {
            let (x, sx) = seg.point_at_arclength(f, rng.random_range(-0.25..0.25))?;
            let (y, sy) = seg.point_at_arclength(f, rng.random_range(-0.25..0.25))?;
            let r = src.rho_sigma(sx, sy)?.value;
            let r_image = dst.rho(&f.lift(&x), &f.lift(&y))?.value;
            let ratio = src.leaf_derivative(sy)? / src.leaf_derivative(sx)?;
            worst = worst.max((r_image * ratio - r).abs() / r);
        }
    }
    Ok(worst)
}

fn ubd(ctx: &Context, p: &UbdParams) -> Result<Output> {
    let f = ctx.f;
    let spec = UbdSpec {
        scales: p
            .delta_u
            .iter()
            .map(|&delta_u| BoxScale {
                delta_u,
                delta_s: p.delta_s,
            })
            .collect(),
        centers: p.centers,
        leaves: p.leaves,
        bins: p.bins,
        samples: p.samples,
        ..UbdSpec::default()
    };
    let report = ubd_constant(f, &spec, ctx.seed)?;
    let mut rng = ctx.rng();
    let rho_params = DensityParams {
        tail_tol: ctx.tol.rho_tol,
        ..DensityParams::default()
    };
    let rho_residual = rho_cocycle_residual(f, rho_params, p.rho_pairs, &mut rng)?;
    let periodic = specialness_diagnostic(f, p.max_period, &ctx.shooting())?;
    let x0 = Vec2::new(rng.random(), rng.random());
    let u = birkhoff_exponent(f, &x0, p.birkhoff_samples, 20)?;
    let s = birkhoff_stable_exponent(f, &x0, p.birkhoff_samples, 20)?;
    let verdict = theorem_b_verdict(f, &report, &periodic, &u, &s);

    let mut scsv = String::from("delta_u,delta_s,c_exact,c_monte_carlo,c_lower,c_upper\n");
    for sc in &report.scales {
        let _ = writeln!(
            scsv,
            "{},{},{},{},{},{}",
            num(sc.scale.delta_u),
            num(sc.scale.delta_s),
            num(sc.c_exact),
            num(sc.c_monte_carlo),
            num(sc.c_lower),
            num(sc.c_upper)
        );
    }
    Ok(Output {
        tables: vec![(String::new(), report.to_csv()), ("_scales".into(), scsv)],
        metrics: json!({
            "c_estimate": report.c_estimate,
            "c_lower": report.c_lower,
            "c_upper": report.c_upper,
            "c_by_scale": report.scales.iter().map(|s| s.c_exact).collect::<Vec<_>>(),
            "growth": report.growth,
            "flag": report.flag,
            "rho_cocycle_residual": rho_residual,
            "theorem_b": verdict,
        }),
    })
}

fn strip(ctx: &Context, p: &StripExperimentParams) -> Result<Output> {
    let f = ctx.f;
    let strip = Strip::build(f, StripParams::default())?;
    let fiber = strip.fiber(f, p.t)?;
    let image = FiberImage::build(f, &strip, &fiber, p.k_max)?;
    let rows = growth_rows(&strip, &image);
    let l0 = image.length(0);

    let field = ConjugacyField::build(f, ctx.tol.conjugacy_tol)?;
    let leaf_image = field.leaf_image_check(&fiber.seg)?;
    let mut rng = ctx.rng();
    let samples: Vec<Vec2> = (0..8).map(|_| Vec2::new(rng.random(), rng.random())).collect();
    let q = quasi_isometry_constant(f, Flavor::Unstable, &samples, &[4.0 * l0], 5e-3)?[0].q;
    let k_bound = growth_bound(l0, q, field.sup_bound());

    let mu = strip_volume_measure(f, &strip, &fiber, &image, p.particles, rng.random())?;
    let mut csv = String::from("k,length,ratio,growth_factor,eta_mass_defect,eta_density_min,eta_density_max\n");
    let (mut mass_defect, mut dmin, mut dmax) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for r in &rows {
        let eta = pushforward_leaf_measure(f, &strip, &fiber, &image, &mu, r.k)?;
        let alpha_k = strip.alpha.powi(r.k as i32);
        let defect = (eta.weights.iter().sum::<f64>() / alpha_k - 1.0).abs();
        let (lo, hi) = extremes(eta.density(p.bins, l0).iter().map(|b| b.density));
        mass_defect = mass_defect.max(defect);
        dmin = dmin.min(lo);
        dmax = dmax.max(hi);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            r.k,
            num(r.length),
            num(r.ratio),
            num(r.growth_factor),
            num(defect),
            num(lo),
            num(hi)
        );
    }
    let (ratio_min, ratio_max) = extremes(rows.iter().map(|r| r.ratio));
    let band = p.ubd_c.map(|c| (c.powi(-4) / k_bound, c.powi(4) * k_bound));
    Ok(Output {
        tables: vec![(String::new(), csv)],
        metrics: json!({
            "alpha": strip.alpha,
            "delta0": strip.delta0,
            "length0": l0,
            "q": q,
            "sup_bound": field.sup_bound(),
            "k_bound": k_bound,
            "ratio_min": ratio_min,
            "ratio_max": ratio_max,
            "ratio_within_k_bound": ratio_min >= (1.0 - RATIO_SLACK) / k_bound && ratio_max <= (1.0 + RATIO_SLACK) * k_bound,
            "leaf_image_defect": leaf_image,
            "eta_mass_defect": mass_defect,
            "eta_density_min": dmin,
            "eta_density_max": dmax,
            "density_band": band.map(|b| [b.0, b.1]),
            "density_within_band": band.map(|(lo, hi)| dmin >= lo && dmax <= hi),
        }),
    })
}

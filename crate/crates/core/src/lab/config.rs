//! TOML configuration of a lab run.
//!
//! Every validation error carries the line of the offending table or key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Spanned;

use crate::error::{LabError, Result};
use crate::torus_map::{
    examples, IntMatrix2, NearIdentity, ToralEndomorphism, Trig1, Trig1Term, TrigPolynomial2, TrigTerm,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleName {
    Linear,
    Shear,
    SmoothConjugate,
    AreaPreservingConjugate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKindName {
    Raw,
    ShearComposition,
    SmoothConjugate,
}

/// `amp · sin(2π k·x + phase)`, with vector amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub k: [i64; 2],
    pub amp: [f64; 2],
    #[serde(default)]
    pub phase: f64,
}

/// `amp · sin(2π k t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term1Spec {
    pub k: i64,
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

/// The `[map]` table: either a named example or a matrix with a constructor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<ExampleName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[i64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MapKindName>,
    /// Planar terms: the perturbation for `raw`, `h − Id` for `smooth_conjugate`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermSpec>,
    /// Shear profiles for `shear_composition` and shear-type `smooth_conjugate`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<Term1Spec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<Term1Spec>,
}

impl MapSpec {
    fn check(&self) -> std::result::Result<(), String> {
        if self.example.is_some() {
            if self.matrix.is_some() || self.kind.is_some() || !self.terms.is_empty() || !self.s.is_empty() || !self.t.is_empty() {
                return Err("`example` excludes `matrix`, `kind`, `terms`, `s` and `t`".into());
            }
            return Ok(());
        }
        let Some(m) = self.matrix else {
            return Err("missing `matrix` (or `example`) in [map]".into());
        };
        if m[0][0] * m[1][1] - m[0][1] * m[1][0] == 0 {
            return Err("`matrix` must have nonzero determinant".into());
        }
        let shears = !self.s.is_empty() || !self.t.is_empty();
        match self.kind.unwrap_or(MapKindName::Raw) {
            MapKindName::Raw if shears => Err("kind `raw` takes `terms` only".into()),
            MapKindName::ShearComposition if !self.terms.is_empty() => {
                Err("kind `shear_composition` takes `s` and `t` only".into())
            }
            MapKindName::SmoothConjugate if shears && !self.terms.is_empty() => {
                Err("kind `smooth_conjugate` takes either `terms` or `s`/`t`".into())
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<ToralEndomorphism> {
        if let Some(e) = self.example {
            return Ok(match e {
                ExampleName::Linear => examples::linear(),
                ExampleName::Shear => examples::shear_example(),
                ExampleName::SmoothConjugate => examples::smooth_conjugate_example(),
                ExampleName::AreaPreservingConjugate => examples::area_preserving_conjugate_example(),
            });
        }
        self.check().map_err(LabError::Config)?;
        let l = IntMatrix2::new(self.matrix.expect("checked"))?;
        let planar = TrigPolynomial2::new(
            self.terms
                .iter()
                .map(|t| TrigTerm {
                    k: t.k,
                    amp: t.amp,
                    phase: t.phase,
                })
                .collect(),
        );
        let one = |v: &[Term1Spec]| {
            Trig1::new(
                v.iter()
                    .map(|t| Trig1Term {
                        k: t.k,
                        amp: t.amp,
                        phase: t.phase,
                    })
                    .collect(),
            )
        };
        Ok(match self.kind.unwrap_or(MapKindName::Raw) {
            MapKindName::Raw => ToralEndomorphism::raw(l, planar),
            MapKindName::ShearComposition => ToralEndomorphism::shear_composition(l, one(&self.s), one(&self.t)),
            MapKindName::SmoothConjugate if !self.terms.is_empty() => {
                ToralEndomorphism::smooth_conjugate(l, NearIdentity::Trig(planar))?
            }
            MapKindName::SmoothConjugate => ToralEndomorphism::smooth_conjugate(
                l,
                NearIdentity::Shears {
                    s: one(&self.s),
                    t: one(&self.t),
                },
            )?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Newton tolerance of periodic-orbit shooting.
    pub newton_tol: f64,
    /// Largest accepted tail bound of the leaf density product.
    pub rho_tol: f64,
    /// Cells per side of the certification grid.
    pub cert_grid: usize,
    /// Truncation tolerance of the conjugacy series.
    pub conjugacy_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            rho_tol: 1e-12,
            cert_grid: 256,
            conjugacy_tol: 1e-8,
        }
    }
}

impl Tolerances {
    fn check(&self) -> std::result::Result<(), String> {
        for (key, v) in [
            ("newton_tol", self.newton_tol),
            ("rho_tol", self.rho_tol),
            ("conjugacy_tol", self.conjugacy_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("tolerances.{key} must be a positive number, got {v}"));
            }
        }
        if self.cert_grid == 0 {
            return Err("tolerances.cert_grid must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Certify,
    Exponents,
    Conjugacy,
    Rigidity,
    Ubd,
    Strip,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Certify => "certify",
            ExperimentKind::Exponents => "exponents",
            ExperimentKind::Conjugacy => "conjugacy",
            ExperimentKind::Rigidity => "rigidity",
            ExperimentKind::Ubd => "ubd",
            ExperimentKind::Strip => "strip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyParams {
    pub theta_u: f64,
    pub theta_s: f64,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self {
            theta_u: 0.1,
            theta_s: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentsParams {
    pub max_period: usize,
    pub birkhoff_samples: usize,
    pub blocks: usize,
}

impl Default for ExponentsParams {
    fn default() -> Self {
        Self {
            max_period: 2,
            birkhoff_samples: 100_000,
            blocks: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConjugacyParams {
    pub points: usize,
}

impl Default for ConjugacyParams {
    fn default() -> Self {
        Self { points: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigidityParams {
    pub max_period: usize,
    /// Hölder scales are `2^-level` for levels in this range.
    pub holder_min_level: i32,
    pub holder_max_level: i32,
    pub bases: usize,
    pub leaf_halflength: f64,
}

impl Default for RigidityParams {
    fn default() -> Self {
        Self {
            max_period: 6,
            holder_min_level: 4,
            holder_max_level: 14,
            bases: 16,
            leaf_halflength: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UbdParams {
    /// Unstable box sizes, small to large.
    pub delta_u: Vec<f64>,
    pub delta_s: f64,
    pub centers: usize,
    pub samples: usize,
    pub bins: usize,
    pub leaves: usize,
    /// Same-leaf pairs for the density cocycle check.
    pub rho_pairs: usize,
    /// Periodic and Birkhoff data for the bounded-density verdict.
    pub max_period: usize,
    pub birkhoff_samples: usize,
}

impl Default for UbdParams {
    fn default() -> Self {
        Self {
            delta_u: vec![0.4, 1.2, 3.6],
            delta_s: 0.02,
            centers: 10,
            samples: 100_000,
            bins: 32,
            leaves: 9,
            rho_pairs: 20,
            max_period: 4,
            birkhoff_samples: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripExperimentParams {
    pub k_max: usize,
    /// Base arclength of the fiber.
    pub t: f64,
    pub particles: usize,
    pub bins: usize,
    /// Bounded-density constant used for the density band, when known.
    pub ubd_c: Option<f64>,
}

impl Default for StripExperimentParams {
    fn default() -> Self {
        Self {
            k_max: 8,
            t: 0.3,
            particles: 4000,
            bins: 16,
            ubd_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentParams {
    Certify(CertifyParams),
    Exponents(ExponentsParams),
    Conjugacy(ConjugacyParams),
    Rigidity(RigidityParams),
    Ubd(UbdParams),
    Strip(StripExperimentParams),
}

impl ExperimentParams {
    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Certify => Self::Certify(Default::default()),
            ExperimentKind::Exponents => Self::Exponents(Default::default()),
            ExperimentKind::Conjugacy => Self::Conjugacy(Default::default()),
            ExperimentKind::Rigidity => Self::Rigidity(Default::default()),
            ExperimentKind::Ubd => Self::Ubd(Default::default()),
            ExperimentKind::Strip => Self::Strip(Default::default()),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::Certify(_) => ExperimentKind::Certify,
            Self::Exponents(_) => ExperimentKind::Exponents,
            Self::Conjugacy(_) => ExperimentKind::Conjugacy,
            Self::Rigidity(_) => ExperimentKind::Rigidity,
            Self::Ubd(_) => ExperimentKind::Ubd,
            Self::Strip(_) => ExperimentKind::Strip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub params: ExperimentParams,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LabConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// 0 lets the thread pool choose.
    pub threads: usize,
    pub map: MapSpec,
    pub tolerances: Tolerances,
    pub experiments: Vec<Experiment>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    #[serde(default)]
    threads: usize,
    map: Spanned<MapSpec>,
    #[serde(default)]
    tolerances: Option<Spanned<Tolerances>>,
    #[serde(default)]
    experiments: Vec<Spanned<RawExperiment>>,
}

#[derive(Deserialize)]
struct RawExperiment {
    name: String,
    kind: ExperimentKind,
    #[serde(flatten)]
    params: toml::Table,
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

fn anchored(text: &str, offset: usize, msg: impl std::fmt::Display) -> LabError {
    LabError::Config(format!("line {}: {msg}", line_of(text, offset)))
}

fn params_from(kind: ExperimentKind, table: toml::Table) -> std::result::Result<ExperimentParams, toml::de::Error> {
    let v = toml::Value::Table(table);
    Ok(match kind {
        ExperimentKind::Certify => ExperimentParams::Certify(v.try_into()?),
        ExperimentKind::Exponents => ExperimentParams::Exponents(v.try_into()?),
        ExperimentKind::Conjugacy => ExperimentParams::Conjugacy(v.try_into()?),
        ExperimentKind::Rigidity => ExperimentParams::Rigidity(v.try_into()?),
        ExperimentKind::Ubd => ExperimentParams::Ubd(v.try_into()?),
        ExperimentKind::Strip => ExperimentParams::Strip(v.try_into()?),
    })
}

fn check_params(p: &ExperimentParams) -> std::result::Result<(), String> {
    let positive = |key: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(format!("`{key}` must be positive, got {v}"))
        }
    };
    match p {
        ExperimentParams::Certify(c) => {
            positive("theta_u", c.theta_u)?;
            positive("theta_s", c.theta_s)
        }
        ExperimentParams::Exponents(e) => {
            if e.max_period == 0 || e.birkhoff_samples < 2 || e.blocks < 2 {
                return Err("need max_period >= 1, birkhoff_samples >= 2 and blocks >= 2".into());
            }
            Ok(())
        }
        ExperimentParams::Conjugacy(c) if c.points == 0 => Err("`points` must be positive".into()),
        ExperimentParams::Conjugacy(_) => Ok(()),
        ExperimentParams::Rigidity(r) => {
            positive("leaf_halflength", r.leaf_halflength)?;
            if r.max_period == 0 || r.bases == 0 || r.holder_min_level >= r.holder_max_level {
                return Err("need max_period >= 1, bases >= 1 and holder_min_level < holder_max_level".into());
            }
            Ok(())
        }
        ExperimentParams::Ubd(u) => {
            positive("delta_s", u.delta_s)?;
            for &d in &u.delta_u {
                positive("delta_u", d)?;
            }
            if u.delta_u.windows(2).any(|w| w[1] <= w[0]) {
                return Err("`delta_u` must be strictly increasing".into());
            }
            Ok(())
        }
        ExperimentParams::Strip(s) => {
            if let Some(c) = s.ubd_c {
                if !(c >= 1.0) {
                    return Err(format!("`ubd_c` must be at least 1, got {c}"));
                }
            }
            if s.particles == 0 || s.bins == 0 {
                return Err("`particles` and `bins` must be positive".into());
            }
            Ok(())
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl LabConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| s.start).unwrap_or(0);
            anchored(text, at, e.message().trim_end())
        })?;
        raw.map.get_ref().check().map_err(|m| anchored(text, raw.map.span().start, m))?;
        let tolerances = match raw.tolerances {
            Some(t) => {
                t.get_ref().check().map_err(|m| anchored(text, t.span().start, m))?;
                t.into_inner()
            }
            None => Tolerances::default(),
        };
        let mut experiments: Vec<Experiment> = Vec::with_capacity(raw.experiments.len());
        for e in raw.experiments {
            let at = e.span().start;
            let RawExperiment { name, kind, params } = e.into_inner();
            if !valid_name(&name) {
                return Err(anchored(text, at, format!("experiment name `{name}` must be nonempty ASCII letters, digits, `_` or `-`")));
            }
            if experiments.iter().any(|x| x.name == name) {
                return Err(anchored(text, at, format!("duplicate experiment name `{name}`")));
            }
            let params =
                params_from(kind, params).map_err(|err| anchored(text, at, format!("experiment `{name}`: {}", err.message().trim_end())))?;
            check_params(&params).map_err(|m| anchored(text, at, format!("experiment `{name}`: {m}")))?;
            experiments.push(Experiment { name, params });
        }
        Ok(Self {
            seed: raw.seed,
            out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("lab-out")),
            threads: raw.threads,
            map: raw.map.into_inner(),
            tolerances,
            experiments,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of everything that determines the outputs. Thread count and
    /// output directory are excluded.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            seed: u64,
            map: &'a MapSpec,
            tolerances: &'a Tolerances,
            experiments: &'a [Experiment],
        }
        let json = serde_json::to_string(&Canonical {
            seed: self.seed,
            map: &self.map,
            tolerances: &self.tolerances,
            experiments: &self.experiments,
        })
        .expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
seed = 5

[map]
matrix = [[3, 1], [2, 0]]
kind = "raw"

[[map.terms]]
k = [0, 1]
amp = [0.001, 0.0]

[tolerances]
conjugacy_tol = 1e-9

[[experiments]]
name = "cert"
kind = "certify"

[[experiments]]
name = "exp"
kind = "exponents"
max_period = 3
"#;

    #[test]
    fn parses_and_defaults() {
        let c = LabConfig::parse(GOOD).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.tolerances.conjugacy_tol, 1e-9);
        assert_eq!(c.tolerances.cert_grid, 256);
        assert_eq!(c.experiments.len(), 2);
        match &c.experiments[1].params {
            ExperimentParams::Exponents(e) => {
                assert_eq!(e.max_period, 3);
                assert_eq!(e.blocks, 20);
            }
            other => panic!("{other:?}"),
        }
        assert!(!c.map.build().unwrap().is_linear());
    }

    fn err_line(text: &str) -> String {
        match LabConfig::parse(text) {
            Err(LabError::Config(m)) => m,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_are_line_anchored() {
        let m = err_line("seed = 1\n\n[map]\nkind = \"raw\"\n");
        assert!(m.starts_with("line 3:") && m.contains("matrix"), "{m}");
        let m = err_line(&GOOD.replace("conjugacy_tol = 1e-9", "conjugacy_tol = -1.0"));
        assert!(m.starts_with("line 12:"), "{m}");
        let m = err_line(&GOOD.replace("name = \"exp\"", "name = \"cert\""));
        assert!(m.starts_with("line 19:") && m.contains("duplicate"), "{m}");
        let m = err_line(&GOOD.replace("max_period = 3", "max_perod = 3"));
        assert!(m.contains("max_perod"), "{m}");
        let m = err_line("[map]\nexample = \"linear\"\nmatrix = [[3, 1], [2, 0]]\n");
        assert!(m.starts_with("line 1:"), "{m}");
    }

    #[test]
    fn hash_ignores_threads_and_out_dir() {
        let a = LabConfig::parse(GOOD).unwrap();
        let b = LabConfig::parse(&format!("threads = 4\nout_dir = \"x\"\n{GOOD}")).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        let c = LabConfig::parse(&GOOD.replace("seed = 5", "seed = 6")).unwrap();
        assert_ne!(a.config_hash(), c.config_hash());
    }
}

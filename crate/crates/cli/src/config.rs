//! Run configuration: a TOML file with one level of sections.
//!
//! Every section is optional and every key has a default, so a command can
//! run from flags alone. Keys that no section recognises are collected and
//! reported together as one validation error.

use crate::error::{CliError, CliResult};
use beamlab_core::calderon::TestField;
use beamlab_core::fbi::{Cutoff, Thresholds};
use beamlab_core::geodesic::TraceOptions;
use beamlab_core::manifold::{build_surface, Bump, MetricChart, Profile, SurfaceSpec};
use beamlab_core::quasimode::{BeamKind, BeamParams, NPolicy};
use num_complex::Complex64 as C;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, Deserialize)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub surface: SurfaceSection,
    #[serde(default)]
    pub beam: BeamSection,
    #[serde(default)]
    pub grids: GridsSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub field: Option<FieldSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct SurfaceSection {
    pub name: Option<String>,
    pub a: Option<f64>,
    pub caps: Option<f64>,
    pub profile: Option<String>,
    pub amplitude: Option<f64>,
    pub bump: Option<String>,
    pub jet_order: Option<usize>,
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct BeamSection {
    /// `exact_flat` or `jets`.
    pub mode: Option<String>,
    pub m0: Option<String>,
    pub psi: Option<Vec<String>>,
    pub b: Option<f64>,
    pub phase_order: Option<usize>,
    pub amp_order: Option<usize>,
    /// `fixed:N` or `scaled:N_MAX`.
    pub n_policy: Option<String>,
    pub delta_prime: Option<f64>,
    pub lambda: Option<f64>,
    pub frame_radius: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct GridsSection {
    pub h: Option<Vec<f64>>,
    pub alpha_radius: Option<f64>,
    pub alpha_n: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct ExperimentSection {
    pub point: Option<[f64; 2]>,
    pub xi: Option<[f64; 2]>,
    pub zeta1: Option<[f64; 2]>,
    pub lambda: Option<f64>,
    pub slab: Option<[f64; 2]>,
    pub window_lo: Option<[f64; 2]>,
    pub window_hi: Option<[f64; 2]>,
    pub sample_step: Option<f64>,
    pub sample_degree: Option<usize>,
    pub cutoff_radius: Option<f64>,
    pub cutoff_plateau: Option<f64>,
    pub c_min_factor: Option<f64>,
    pub r2_min: Option<f64>,
    pub fit_margin: Option<f64>,
    pub tol: Option<f64>,
    pub trace_step: Option<f64>,
    pub max_length: Option<f64>,
    pub xray_field: Option<String>,
    pub quad_order: Option<usize>,
}

/// The Calderón input: a built-in test field or a sample file.
#[derive(Clone, Debug, Default, Deserialize)]
pub struct FieldSection {
    pub kind: Option<String>,
    pub file: Option<PathBuf>,
    pub center: Option<[f64; 2]>,
    pub normal: Option<[f64; 2]>,
    pub width: Option<f64>,
    pub sigma: Option<f64>,
    pub sigma1: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub prefix: Option<String>,
}

/// Parses a config, listing every unknown key in a single error.
pub fn parse(text: &str) -> CliResult<RunConfig> {
    let de = toml::Deserializer::new(text);
    let mut unknown = Vec::new();
    let cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| CliError::Validation(format!("config: {}", e.message().trim())))?;
    if !unknown.is_empty() {
        return Err(CliError::Validation(format!("unknown config keys: {}", unknown.join(", "))));
    }
    Ok(cfg)
}

pub fn load(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            let cfg = parse(&text)?;
            if let Some(f) = cfg.field.as_ref().and_then(|f| f.file.as_ref()) {
                let resolved = p.parent().unwrap_or(Path::new(".")).join(f);
                if !resolved.exists() {
                    return Err(CliError::Validation(format!("field.file {} does not exist", resolved.display())));
                }
            }
            Ok(cfg)
        }
    }
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("{name} must be positive, got {v}")))
    }
}

/// Parses `a,b` into a pair of floats.
pub fn pair(name: &str, s: &str) -> CliResult<[f64; 2]> {
    let v = floats(name, s)?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(CliError::Validation(format!("{name} expects two comma-separated numbers, got `{s}`"))),
    }
}

pub fn floats(name: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Validation(format!("{name}: cannot parse `{s}`: {e}")))
}

/// `M0` as `i*I`, `s*i*I` for real `s`, or `re,im`.
pub fn parse_m0(s: &str) -> CliResult<C> {
    let t = s.replace(' ', "");
    if t == "i*I" {
        return Ok(C::new(0.0, 1.0));
    }
    if let Some(scale) = t.strip_suffix("*i*I") {
        let v: f64 = scale.parse().map_err(|_| CliError::Validation(format!("beam.m0: cannot parse `{s}`")))?;
        return Ok(C::new(0.0, v));
    }
    let [re, im] = pair("beam.m0", &t)?;
    Ok(C::new(re, im))
}

fn parse_policy(s: &str) -> CliResult<NPolicy> {
    let bad = || CliError::Validation(format!("beam.n_policy must be `fixed:N` or `scaled:N_MAX`, got `{s}`"));
    let (kind, n) = s.split_once(':').ok_or_else(bad)?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    match kind.trim() {
        "fixed" => Ok(NPolicy::Fixed(n)),
        "scaled" => Ok(NPolicy::Scaled { n_max: n }),
        _ => Err(bad()),
    }
}

impl RunConfig {
    pub fn surface_name(&self) -> &str {
        self.surface.name.as_deref().unwrap_or("flat_cylinder")
    }

    pub fn chart(&self) -> CliResult<MetricChart> {
        let s = &self.surface;
        if let Some(a) = s.a {
            positive("surface.a", a)?;
        }
        if let Some(m) = s.margin {
            positive("surface.margin", m)?;
        }
        let spec = match self.surface_name() {
            "flat_cylinder" => SurfaceSpec::FlatCylinder { a: s.a.unwrap_or(1.0) },
            "sphere_patch" => SurfaceSpec::SpherePatch { cap: s.caps.unwrap_or(0.4) },
            "surface_of_revolution" => {
                let p = s.profile.as_deref().ok_or_else(|| {
                    CliError::Validation("surface.profile is required for surface_of_revolution".into())
                })?;
                SurfaceSpec::SurfaceOfRevolution { profile: Profile::parse(p)? }
            }
            "perturbed_flat" => SurfaceSpec::PerturbedFlat {
                amplitude: s.amplitude.unwrap_or(0.2),
                bump: match &s.bump {
                    Some(b) => Bump::parse(b)?,
                    None => Bump::default(),
                },
            },
            other => {
                return Err(CliError::Validation(format!(
                    "surface.name `{other}` is not one of flat_cylinder, sphere_patch, surface_of_revolution, perturbed_flat"
                )))
            }
        };
        // Metric jets two orders past the phase jets, which is what the eikonal recursion consumes.
        let jet_order = s.jet_order.unwrap_or(self.beam.phase_order.unwrap_or(4) + 2);
        Ok(build_surface(spec, jet_order, s.margin)?)
    }

    /// `exact_flat` on the flat cylinder unless configured otherwise.
    pub fn beam_mode(&self) -> String {
        match &self.beam.mode {
            Some(m) => m.clone(),
            None if self.surface_name() == "flat_cylinder" => "exact_flat".into(),
            None => "jets".into(),
        }
    }

    pub fn beam_params(&self) -> CliResult<BeamParams> {
        let b = &self.beam;
        let mode = self.beam_mode();
        let default_dp = if mode == "exact_flat" { 4.0 } else { 1.0 };
        let delta_prime = positive("beam.delta_prime", b.delta_prime.unwrap_or(default_dp))?;
        let lambda = b.lambda.unwrap_or(0.0);
        if !lambda.is_finite() {
            return Err(CliError::Validation("beam.lambda must be finite".into()));
        }
        let kind = match mode.as_str() {
            "exact_flat" => BeamKind::ExactFlat {
                b: positive("beam.b", b.b.unwrap_or(3.0))?,
                n: parse_policy(b.n_policy.as_deref().unwrap_or("scaled:40"))?,
            },
            "jets" => {
                let m0 = parse_m0(b.m0.as_deref().unwrap_or("i*I"))?;
                if !(m0.im > 0.0) {
                    return Err(CliError::Validation("beam.m0 must have positive imaginary part".into()));
                }
                let psi = b
                    .psi
                    .iter()
                    .flatten()
                    .map(|s| pair("beam.psi", s).map(|[re, im]| C::new(re, im)))
                    .collect::<CliResult<Vec<_>>>()?;
                BeamKind::Jets {
                    m0,
                    psi,
                    phase_order: b.phase_order.unwrap_or(4),
                    amp_order: b.amp_order.unwrap_or(2),
                    n: parse_policy(b.n_policy.as_deref().unwrap_or("fixed:2"))?,
                }
            }
            other => return Err(CliError::Validation(format!("beam.mode must be exact_flat or jets, got `{other}`"))),
        };
        Ok(BeamParams { delta_prime, lambda, kind })
    }

    pub fn frame_radius(&self) -> CliResult<f64> {
        let dp = self.beam_params()?.delta_prime;
        positive("beam.frame_radius", self.beam.frame_radius.unwrap_or(dp))
    }

    pub fn trace_options(&self) -> CliResult<TraceOptions> {
        let d = TraceOptions::default();
        Ok(TraceOptions {
            step: positive("experiment.trace_step", self.experiment.trace_step.unwrap_or(d.step))?,
            max_length: positive("experiment.max_length", self.experiment.max_length.unwrap_or(d.max_length))?,
            ..d
        })
    }

    pub fn tol(&self) -> CliResult<f64> {
        positive("experiment.tol", self.experiment.tol.unwrap_or(1e-6))
    }

    pub fn thresholds(&self) -> CliResult<Thresholds> {
        let d = Thresholds::default();
        let e = &self.experiment;
        Ok(Thresholds {
            c_min_factor: positive("experiment.c_min_factor", e.c_min_factor.unwrap_or(d.c_min_factor))?,
            r2_min: e.r2_min.unwrap_or(d.r2_min),
            margin: e.fit_margin.unwrap_or(d.margin),
        })
    }

    pub fn cutoff(&self) -> CliResult<Cutoff> {
        let d = Cutoff::default();
        let radius = positive("experiment.cutoff_radius", self.experiment.cutoff_radius.unwrap_or(d.radius))?;
        let plateau = positive("experiment.cutoff_plateau", self.experiment.cutoff_plateau.unwrap_or(d.plateau))?;
        if plateau >= radius {
            return Err(CliError::Validation("experiment.cutoff_plateau must be smaller than cutoff_radius".into()));
        }
        Ok(Cutoff { radius, plateau })
    }

    /// Positive and strictly decreasing.
    pub fn hs(&self, flag: Option<&[f64]>) -> CliResult<Vec<f64>> {
        let hs = flag.map(|v| v.to_vec()).or_else(|| self.grids.h.clone()).ok_or_else(|| {
            CliError::Validation("grids.h is required (or pass --h)".into())
        })?;
        check_hs(&hs)?;
        Ok(hs)
    }

    pub fn test_field(&self) -> CliResult<Option<TestField>> {
        let Some(f) = &self.field else { return Ok(None) };
        if f.file.is_some() {
            return Ok(None);
        }
        let kind = f.kind.as_deref().ok_or_else(|| CliError::Validation("field.kind or field.file is required".into()))?;
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| CliError::Validation(format!("field.{name} is required for kind `{kind}`")))
        };
        let center = f.center.unwrap_or([0.0, 0.0]);
        let field = match kind {
            "zero" => TestField::Zero,
            "bump" => TestField::Bump { center, sigma: need("sigma", f.sigma)?, sigma1: need("sigma1", f.sigma1)? },
            "jump" => TestField::Jump {
                center,
                normal: f.normal.ok_or_else(|| CliError::Validation("field.normal is required for kind `jump`".into()))?,
                sigma: need("sigma", f.sigma)?,
                sigma1: need("sigma1", f.sigma1)?,
            },
            "periodic_bump" => TestField::PeriodicBump {
                center,
                width: need("width", f.width)?,
                sigma: need("sigma", f.sigma)?,
                sigma1: need("sigma1", f.sigma1)?,
            },
            "periodic_jump" => TestField::PeriodicJump {
                center,
                width: need("width", f.width)?,
                sigma: need("sigma", f.sigma)?,
                sigma1: need("sigma1", f.sigma1)?,
            },
            other => return Err(CliError::Validation(format!("field.kind `{other}` is not a built-in test field"))),
        };
        field.validate()?;
        Ok(Some(field))
    }
}

pub fn check_hs(hs: &[f64]) -> CliResult<()> {
    if hs.is_empty() {
        return Err(CliError::Validation("h list is empty".into()));
    }
    if hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(CliError::Validation("h list entries must be positive".into()));
    }
    if hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Validation("h list must be strictly decreasing".into()));
    }
    Ok(())
}

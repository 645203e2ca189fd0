//! Experiment files: TOML with a `preset` plus `[physics]`, `[numerics]`,
//! `[output]` and optional `[sweep]` and `[bath]` sections.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use cqsim_core::fokker_planck::MAX_STEP_RATE;
use cqsim_core::io::fmt_f64;
use cqsim_core::langevin::TwoLevelModel;
use cqsim_core::TwoLevelParams;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    pipeline: Option<String>,
    physics: Option<RawPhysics>,
    numerics: Option<RawNumerics>,
    output: Option<RawOutput>,
    sweep: Option<RawSweep>,
    bath: Option<RawBath>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    omega0: Option<f64>,
    hbar: Option<f64>,
    lambda: Option<f64>,
    a0: Option<f64>,
    gamma: Option<f64>,
    q_scale: Option<f64>,
    kt: Option<f64>,
    theta: Option<f64>,
    thetas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNumerics {
    dt: Option<f64>,
    t_end: Option<f64>,
    n_traj: Option<usize>,
    master_seed: Option<u64>,
    record_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    svg: Option<bool>,
    compare_analytic: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    kt_over_delta: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    n_osc: Option<usize>,
    cutoff: Option<f64>,
    counterterm: Option<bool>,
    displaced: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1,
    Fig2a,
    Fig2b,
    Fig3,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2a => "fig2a",
            Preset::Fig2b => "fig2b",
            Preset::Fig3 => "fig3",
            Preset::Custom => "custom",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "fig1" => Preset::Fig1,
            "fig2a" => Preset::Fig2a,
            "fig2b" => Preset::Fig2b,
            "fig3" => Preset::Fig3,
            "custom" => Preset::Custom,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    /// Zero-temperature Fokker-Planck flow for each initial angle.
    Flow,
    /// Langevin ensemble against the Fokker-Planck average.
    Ensemble,
    /// Equilibrium `b1` over a temperature sweep.
    Sweep,
}

impl Pipeline {
    fn name(self) -> &'static str {
        match self {
            Pipeline::Flow => "flow",
            Pipeline::Ensemble => "ensemble",
            Pipeline::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "flow" => Pipeline::Flow,
            "ensemble" => Pipeline::Ensemble,
            "sweep" => Pipeline::Sweep,
            _ => return None,
        })
    }
}

/// Environment strength, in exactly one of the two accepted forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Physics {
    Rates { lambda: f64, a0: f64 },
    Microscopic { gamma: f64, q_scale: f64, kt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSettings {
    pub n_osc: usize,
    pub cutoff: f64,
    pub counterterm: bool,
    pub displaced: bool,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub pipeline: Pipeline,
    pub omega0: f64,
    pub hbar: f64,
    pub physics: Physics,
    pub thetas: Vec<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub master_seed: u64,
    pub record_every: usize,
    /// Temperatures in units of `Delta / k_B`.
    pub sweep: Vec<f64>,
    pub bath: Option<BathSettings>,
    pub compare_analytic: bool,
    pub out_dir: PathBuf,
    pub svg: bool,
}

impl ExperimentConfig {
    pub fn delta(&self) -> f64 {
        self.hbar * self.omega0
    }

    /// Two-level model at the configured temperature.
    pub fn model(&self) -> cqsim_core::Result<TwoLevelModel> {
        match self.physics {
            Physics::Rates { lambda, a0 } => TwoLevelModel::from_rates(self.omega0, lambda, a0, self.hbar),
            Physics::Microscopic { gamma, q_scale, kt } => {
                TwoLevelModel::new(TwoLevelParams::new(self.omega0, q_scale, self.hbar)?, gamma, kt)
            }
        }
    }

    /// Model at `kT = x Delta`, other couplings unchanged.
    pub fn model_at(&self, kt_over_delta: f64) -> cqsim_core::Result<TwoLevelModel> {
        match self.physics {
            Physics::Rates { a0, .. } => TwoLevelModel::from_rates(self.omega0, a0 * kt_over_delta, a0, self.hbar),
            Physics::Microscopic { gamma, q_scale, .. } => {
                TwoLevelModel::new(TwoLevelParams::new(self.omega0, q_scale, self.hbar)?, gamma, kt_over_delta * self.delta())
            }
        }
    }

    /// `(lambda, A0)` whichever form was given.
    pub fn rates(&self) -> (f64, f64) {
        match self.physics {
            Physics::Rates { lambda, a0 } => (lambda, a0),
            Physics::Microscopic { gamma, q_scale, kt } => {
                let c = 2.0 * gamma * q_scale * q_scale / (self.hbar * self.hbar);
                (c * kt, c * self.delta())
            }
        }
    }

    /// One-line description of everything that affects the numbers.
    pub fn provenance(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
        let mut s = format!(
            "config: preset={} pipeline={} omega0={} hbar={}",
            self.preset.name(),
            self.pipeline.name(),
            fmt_f64(self.omega0),
            fmt_f64(self.hbar)
        );
        match self.physics {
            Physics::Rates { lambda, a0 } => write!(s, " lambda={} a0={}", fmt_f64(lambda), fmt_f64(a0)),
            Physics::Microscopic { gamma, q_scale, kt } => {
                write!(s, " gamma={} q_scale={} kt={}", fmt_f64(gamma), fmt_f64(q_scale), fmt_f64(kt))
            }
        }
        .unwrap();
        write!(
            s,
            " thetas={} dt={} t_end={} n_traj={} master_seed={} record_every={}",
            list(&self.thetas),
            fmt_f64(self.dt),
            fmt_f64(self.t_end),
            self.n_traj,
            self.master_seed,
            self.record_every
        )
        .unwrap();
        if self.pipeline == Pipeline::Sweep {
            write!(s, " kt_over_delta={}", list(&self.sweep)).unwrap();
        }
        if let Some(b) = self.bath {
            write!(s, " bath.n_osc={} bath.cutoff={} bath.counterterm={} bath.displaced={}", b.n_osc, fmt_f64(b.cutoff), b.counterterm, b.displaced)
                .unwrap();
        }
        if self.compare_analytic {
            s.push_str(" compare_analytic=true");
        }
        s
    }

    /// Static checks; empty iff a run would start.
    pub fn validate(&self) -> Vec<String> {
        let mut d = Vec::new();
        let positive = [("physics.omega0", self.omega0), ("physics.hbar", self.hbar), ("numerics.dt", self.dt), ("numerics.t_end", self.t_end)];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                d.push(format!("{k} must be positive and finite (got {v})"));
            }
        }
        match self.physics {
            Physics::Rates { lambda, a0 } => {
                for (k, v) in [("physics.lambda", lambda), ("physics.a0", a0)] {
                    if !(v >= 0.0 && v.is_finite()) {
                        d.push(format!("{k} must be non-negative (got {v})"));
                    }
                }
            }
            Physics::Microscopic { gamma, q_scale, kt } => {
                for (k, v) in [("physics.gamma", gamma), ("physics.kt", kt)] {
                    if !(v >= 0.0 && v.is_finite()) {
                        d.push(format!("{k} must be non-negative (got {v})"));
                    }
                }
                if !(q_scale > 0.0 && q_scale.is_finite()) {
                    d.push(format!("physics.q_scale must be positive (got {q_scale})"));
                }
            }
        }
        if self.record_every == 0 {
            d.push("numerics.record_every must be at least 1".into());
        }
        if self.thetas.is_empty() {
            d.push("physics.theta: at least one initial angle is needed".into());
        }
        if !d.is_empty() {
            return d;
        }
        let (lambda, a0) = self.rates();
        let rate = self.omega0.max(2.0 * lambda).max(a0);
        if self.dt * rate >= MAX_STEP_RATE {
            d.push(format!(
                "numerics.dt = {} gives dt * max(omega0, 2 lambda, A0) = {} >= {MAX_STEP_RATE}",
                self.dt,
                self.dt * rate
            ));
        }
        if self.t_end < self.dt {
            d.push("numerics.t_end is shorter than one step".into());
        }
        match self.pipeline {
            Pipeline::Flow => {
                if lambda != 0.0 {
                    d.push(format!("the zero-temperature flow needs lambda = 0 (got {lambda})"));
                }
                if !(a0 < 2.0 * self.omega0) {
                    d.push(format!("A0 = {a0} >= 2 omega0: asymptotic rate undefined"));
                }
            }
            Pipeline::Ensemble | Pipeline::Sweep => {
                if self.n_traj < 2 {
                    d.push("numerics.n_traj must be at least 2".into());
                }
                if let Physics::Rates { lambda, a0 } = self.physics {
                    if a0 == 0.0 && lambda > 0.0 {
                        d.push("physics.a0 = 0 with lambda > 0 has no (gamma, T) realization for trajectories; use a small positive a0".into());
                    }
                }
                if self.thetas.len() != 1 {
                    d.push("ensemble runs take a single physics.theta".into());
                }
            }
        }
        if self.pipeline == Pipeline::Sweep {
            if self.sweep.is_empty() {
                d.push("sweep.kt_over_delta is empty".into());
            }
            if self.sweep.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                d.push("sweep.kt_over_delta entries must be positive".into());
            }
            if let Physics::Rates { a0, .. } = self.physics {
                if let Some(x) = self.sweep.iter().copied().reduce(f64::max) {
                    if self.dt * 2.0 * a0 * x >= MAX_STEP_RATE && self.dt * self.omega0 < MAX_STEP_RATE {
                        d.push(format!("numerics.dt too large for the hottest sweep point (dt * 2 lambda = {})", self.dt * 2.0 * a0 * x));
                    }
                }
            }
        }
        if self.compare_analytic {
            if self.pipeline != Pipeline::Ensemble {
                d.push("output.compare_analytic applies to the ensemble pipeline only".into());
            }
            if a0 > 0.01 * self.omega0 {
                d.push(format!("the pure-dephasing closed form needs A0 <= 0.01 omega0 (got {a0})"));
            }
            if !(lambda < self.omega0) {
                d.push(format!("lambda = {lambda} >= omega0 = {}: overdamped branch has no closed form", self.omega0));
            }
            if self.thetas.iter().any(|t| (t - PI / 4.0).abs() > 1e-12) {
                d.push("the pure-dephasing closed form starts from theta = pi/4".into());
            }
        }
        if let Some(b) = self.bath {
            if self.pipeline != Pipeline::Ensemble {
                d.push("[bath] applies to the ensemble pipeline only".into());
            }
            if b.n_osc < 2 || !(b.cutoff > 0.0) {
                d.push("bath.n_osc must be at least 2 and bath.cutoff positive".into());
            } else {
                let rec = 2.0 * PI * b.n_osc as f64 / b.cutoff;
                if self.t_end >= rec {
                    d.push(format!("numerics.t_end = {} reaches the bath recurrence time {rec}", self.t_end));
                }
                let phase = self.dt * b.cutoff.max(self.omega0);
                if phase >= cqsim_core::bath::MAX_STEP_PHASE {
                    d.push(format!("numerics.dt gives dt * max(cutoff, omega0) = {phase} >= {}", cqsim_core::bath::MAX_STEP_PHASE));
                }
            }
        }
        d
    }
}

/// Values a preset fixes; overriding them is a config fault.
struct Locks {
    omega0: f64,
    hbar: f64,
    lambda: Option<f64>,
    a0: f64,
    thetas: Vec<f64>,
    n_traj: Option<usize>,
    sweep: Option<Vec<f64>>,
}

fn locks(p: Preset) -> Option<Locks> {
    let base = Locks { omega0: 5.0, hbar: 1.0, lambda: None, a0: 1.0, thetas: vec![PI / 4.0], n_traj: None, sweep: None };
    Some(match p {
        Preset::Fig1 => Locks { lambda: Some(0.0), thetas: vec![PI / 4.0, PI / 12.0, PI / 50.0], ..base },
        Preset::Fig2a => Locks { lambda: Some(0.02), n_traj: Some(500), ..base },
        Preset::Fig2b => Locks { lambda: Some(2.0), n_traj: Some(2000), ..base },
        Preset::Fig3 => Locks { sweep: Some(vec![0.02, 0.5, 1.0, 2.0, 4.0]), ..base },
        Preset::Custom => return None,
    })
}

/// Preset numerics used when the file leaves them out.
fn preset_numerics(p: Preset) -> (f64, f64, usize, u64, usize) {
    // (dt, t_end, n_traj, master_seed, record_every)
    match p {
        Preset::Fig1 => (1e-3, 30.0, 0, 0, 10),
        Preset::Fig2a => (0.002, 20.0, 500, 1, 25),
        Preset::Fig2b => (0.002, 20.0, 2000, 1, 25),
        Preset::Fig3 => (0.002, 20.0, 1000, 1, 25),
        Preset::Custom => (0.0, 0.0, 0, 0, 1),
    }
}

/// Line (1-based) of `key = ...` inside `[section]` (or the top level).
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') {
            current = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = l.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn at_line(text: &str, section: &str, key: &str, msg: String) -> String {
    match line_of(text, section, key) {
        Some(n) => format!("line {n}: {msg}"),
        None => msg,
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

/// Parses and resolves a config file, or returns the diagnostics.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().trim().to_string();
        let mut line = e.span().map(|span| text[..span.start.min(text.len())].lines().count().max(1));
        // Unknown keys are reported at their table; point at the key itself.
        if let (Some(start), Some(name)) = (line, msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next())) {
            line = text
                .lines()
                .enumerate()
                .skip(start - 1)
                .find(|(_, l)| l.split_once('=').is_some_and(|(k, _)| k.trim() == name))
                .map(|(i, _)| i + 1)
                .or(line);
        }
        vec![match line {
            Some(n) => format!("line {n}: {msg}"),
            None => msg,
        }]
    })?;
    let mut diags = Vec::new();
    let Some(preset_name) = raw.preset.as_deref() else {
        return Err(vec!["missing key `preset` (one of fig1, fig2a, fig2b, fig3, custom)".into()]);
    };
    let Some(preset) = Preset::parse(preset_name) else {
        return Err(vec![at_line(text, "", "preset", format!("unknown preset `{preset_name}`"))]);
    };
    let phys = raw.physics.unwrap_or_default();
    let num = raw.numerics.unwrap_or_default();
    let out = raw.output.unwrap_or_default();
    let sweep = raw.sweep.unwrap_or_default();
    let bath_given = raw.bath.is_some();

    let pipeline = match (preset, raw.pipeline.as_deref()) {
        (Preset::Custom, None) => {
            diags.push("missing key `pipeline` (flow, ensemble or sweep) for the custom preset".into());
            Pipeline::Flow
        }
        (Preset::Custom, Some(s)) => Pipeline::parse(s).unwrap_or_else(|| {
            diags.push(at_line(text, "", "pipeline", format!("unknown pipeline `{s}`")));
            Pipeline::Flow
        }),
        (p, given) => {
            let fixed = match p {
                Preset::Fig1 => Pipeline::Flow,
                Preset::Fig3 => Pipeline::Sweep,
                _ => Pipeline::Ensemble,
            };
            if let Some(s) = given {
                if Pipeline::parse(s) != Some(fixed) {
                    diags.push(at_line(text, "", "pipeline", format!("pipeline is fixed to `{}` by preset {}", fixed.name(), p.name())));
                }
            }
            fixed
        }
    };

    let rates_given = phys.lambda.is_some() || phys.a0.is_some();
    let micro_given = phys.gamma.is_some() || phys.q_scale.is_some() || phys.kt.is_some();
    if rates_given && micro_given {
        diags.push("physics: give either (lambda, a0) or (gamma, q_scale, kt), not both".into());
    }

    let (d_dt, d_tend, d_ntraj, d_seed, d_rec) = preset_numerics(preset);
    let thetas_given = match (phys.theta, phys.thetas.clone()) {
        (Some(_), Some(_)) => {
            diags.push("physics: give either theta or thetas, not both".into());
            None
        }
        (Some(t), None) => Some(vec![t]),
        (None, t) => t,
    };

    let cfg = if let Some(l) = locks(preset) {
        let mut lock = |section: &str, key: &str, given: Option<f64>, fixed: f64| {
            if let Some(v) = given {
                if !same(v, fixed) {
                    diags.push(at_line(text, section, key, format!("{section}.{key} is locked to {} by preset {}", fmt_f64(fixed), preset.name())));
                }
            }
        };
        lock("physics", "omega0", phys.omega0, l.omega0);
        lock("physics", "hbar", phys.hbar, l.hbar);
        lock("physics", "a0", phys.a0, l.a0);
        if let Some(fixed) = l.lambda {
            lock("physics", "lambda", phys.lambda, fixed);
        }
        if micro_given {
            diags.push(format!("preset {} is defined in the (lambda, a0) form; (gamma, q_scale, kt) cannot be set", preset.name()));
        }
        if let Some(t) = &thetas_given {
            if t.len() != l.thetas.len() || t.iter().zip(&l.thetas).any(|(a, b)| !same(*a, *b)) {
                let key = if phys.theta.is_some() { "theta" } else { "thetas" };
                diags.push(at_line(text, "physics", key, format!("physics.{key} is locked by preset {}", preset.name())));
            }
        }
        if let (Some(fixed), Some(v)) = (l.n_traj, num.n_traj) {
            if v != fixed {
                diags.push(at_line(text, "numerics", "n_traj", format!("numerics.n_traj is locked to {fixed} by preset {}", preset.name())));
            }
        }
        if let (Some(fixed), Some(v)) = (&l.sweep, &sweep.kt_over_delta) {
            if v.len() != fixed.len() || v.iter().zip(fixed).any(|(a, b)| !same(*a, *b)) {
                diags.push(at_line(text, "sweep", "kt_over_delta", format!("sweep.kt_over_delta is locked by preset {}", preset.name())));
            }
        }
        let lambda = l.lambda.or(phys.lambda).unwrap_or(0.0);
        ExperimentConfig {
            preset,
            pipeline,
            omega0: l.omega0,
            hbar: l.hbar,
            physics: Physics::Rates { lambda, a0: l.a0 },
            thetas: l.thetas,
            dt: num.dt.unwrap_or(d_dt),
            t_end: num.t_end.unwrap_or(d_tend),
            n_traj: l.n_traj.or(num.n_traj).unwrap_or(d_ntraj),
            master_seed: num.master_seed.unwrap_or(d_seed),
            record_every: num.record_every.unwrap_or(d_rec),
            sweep: l.sweep.unwrap_or_default(),
            bath: None,
            compare_analytic: false,
            out_dir: out.dir.clone().unwrap_or_else(|| PathBuf::from(".")),
            svg: out.svg.unwrap_or(false),
        }
    } else {
        let mut need = |section: &str, key: &str, v: Option<f64>| {
            v.unwrap_or_else(|| {
                diags.push(format!("missing key `{key}` in [{section}]"));
                f64::NAN
            })
        };
        let omega0 = need("physics", "omega0", phys.omega0);
        let dt = need("numerics", "dt", num.dt);
        let t_end = need("numerics", "t_end", num.t_end);
        let physics = if micro_given {
            Physics::Microscopic {
                gamma: need("physics", "gamma", phys.gamma),
                q_scale: need("physics", "q_scale", phys.q_scale),
                kt: need("physics", "kt", phys.kt),
            }
        } else {
            let a0 = need("physics", "a0", phys.a0);
            let lambda = if pipeline == Pipeline::Sweep { phys.lambda.unwrap_or(0.0) } else { need("physics", "lambda", phys.lambda) };
            Physics::Rates { lambda, a0 }
        };
        let thetas = thetas_given.unwrap_or_else(|| {
            diags.push("missing key `theta` in [physics]".into());
            vec![]
        });
        let n_traj = match (pipeline, num.n_traj) {
            (Pipeline::Flow, v) => v.unwrap_or(0),
            (_, Some(v)) => v,
            (_, None) => {
                diags.push("missing key `n_traj` in [numerics]".into());
                0
            }
        };
        let sweep_vals = match (pipeline, sweep.kt_over_delta) {
            (Pipeline::Sweep, None) => {
                diags.push("missing key `kt_over_delta` in [sweep]".into());
                vec![]
            }
            (_, v) => v.unwrap_or_default(),
        };
        let bath = raw.bath.map(|b| BathSettings {
            n_osc: b.n_osc.unwrap_or_else(|| {
                diags.push("missing key `n_osc` in [bath]".into());
                0
            }),
            cutoff: b.cutoff.unwrap_or_else(|| {
                diags.push("missing key `cutoff` in [bath]".into());
                f64::NAN
            }),
            counterterm: b.counterterm.unwrap_or(false),
            displaced: b.displaced.unwrap_or(false),
        });
        ExperimentConfig {
            preset,
            pipeline,
            omega0,
            hbar: phys.hbar.unwrap_or(1.0),
            physics,
            thetas,
            dt,
            t_end,
            n_traj,
            master_seed: num.master_seed.unwrap_or(d_seed),
            record_every: num.record_every.unwrap_or(d_rec),
            sweep: sweep_vals,
            bath,
            compare_analytic: out.compare_analytic.unwrap_or(false),
            out_dir: out.dir.clone().unwrap_or_else(|| PathBuf::from(".")),
            svg: out.svg.unwrap_or(false),
        }
    };
    if preset != Preset::Custom {
        if bath_given {
            diags.push(format!("[bath] is not part of preset {}", preset.name()));
        }
        if out.compare_analytic.is_some() {
            diags.push(at_line(text, "output", "compare_analytic", format!("output.compare_analytic is not part of preset {}", preset.name())));
        }
    }
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(diags)
    }
}

/// Parse, resolve and check `text`; empty iff a run would start.
pub fn validate(text: &str) -> Vec<String> {
    match parse_config(text) {
        Ok(cfg) => cfg.validate(),
        Err(d) => d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_without_diagnostics() {
        for p in ["fig1", "fig2a", "fig2b", "fig3"] {
            assert!(validate(&format!("preset = \"{p}\"")).is_empty(), "{p}");
        }
    }

    #[test]
    fn fig2b_rates() {
        let c = parse_config("preset = \"fig2b\"").unwrap();
        assert_eq!(c.rates(), (2.0, 1.0));
        assert_eq!(c.n_traj, 2000);
        let m = c.model().unwrap();
        assert!((m.kt - 2.0 * c.delta()).abs() < 1e-12);
    }

    #[test]
    fn locked_value_is_reported_with_line() {
        let d = validate("preset = \"fig1\"\n\n[physics]\na0 = 2.0\n");
        assert_eq!(d.len(), 1);
        assert!(d[0].starts_with("line 4:") && d[0].contains("locked"), "{d:?}");
    }

    #[test]
    fn restating_locked_values_is_fine() {
        let text = "preset = \"fig2a\"\n[physics]\nomega0 = 5\nlambda = 0.02\na0 = 1\ntheta = 0.7853981633974483\n[numerics]\nn_traj = 500\n";
        assert!(validate(text).is_empty());
    }

    #[test]
    fn missing_key_is_named() {
        let d = validate("preset = \"custom\"\npipeline = \"flow\"\n[physics]\nomega0 = 5\na0 = 1\nlambda = 0\ntheta = 0.3\n[numerics]\nt_end = 1\n");
        assert_eq!(d, vec!["missing key `dt` in [numerics]".to_string()]);
    }

    #[test]
    fn syntax_error_has_line() {
        let d = validate("preset = \"fig1\"\n[physics\n");
        assert!(d[0].starts_with("line 2"), "{d:?}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let d = validate("preset = \"fig1\"\n[numerics]\nstep = 0.1\n");
        assert!(d[0].starts_with("line 3") && d[0].contains("step"), "{d:?}");
    }

    #[test]
    fn one_parameterization_per_file() {
        let d = validate("preset = \"custom\"\npipeline = \"ensemble\"\n[physics]\nomega0 = 5\nlambda = 1\ngamma = 0.1\nq_scale = 1\nkt = 1\ntheta = 0.5\n[numerics]\ndt = 0.001\nt_end = 1\nn_traj = 4\n");
        assert!(d.iter().any(|m| m.contains("not both")), "{d:?}");
    }

    #[test]
    fn overdamped_analytic_request_is_flagged() {
        let text = "preset = \"custom\"\npipeline = \"ensemble\"\n[physics]\nomega0 = 5\nlambda = 5\na0 = 0.001\ntheta = 0.7853981633974483\n[numerics]\ndt = 0.001\nt_end = 1\nn_traj = 4\n[output]\ncompare_analytic = true\n";
        let d = validate(text);
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("overdamped"), "{d:?}");
    }

    #[test]
    fn step_size_bound() {
        let d = validate("preset = \"fig1\"\n[numerics]\ndt = 0.2\n");
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("numerics.dt"), "{d:?}");
    }

    #[test]
    fn microscopic_form_converts_to_rates() {
        let c = parse_config("preset = \"custom\"\npipeline = \"ensemble\"\n[physics]\nomega0 = 5\ngamma = 0.1\nq_scale = 1\nkt = 10\ntheta = 0.5\n[numerics]\ndt = 0.001\nt_end = 1\nn_traj = 4\n").unwrap();
        let (l, a) = c.rates();
        assert!((l - 2.0).abs() < 1e-12 && (a - 1.0).abs() < 1e-12);
        assert_eq!(c.model().unwrap().rates(), (l, a));
    }

    #[test]
    fn provenance_is_stable() {
        let c = parse_config("preset = \"fig1\"").unwrap();
        assert_eq!(
            c.provenance(),
            "config: preset=fig1 pipeline=flow omega0=5 hbar=1 lambda=0 a0=1 thetas=0.7853981633974483;0.2617993877991494;0.06283185307179587 dt=0.001 t_end=30 n_traj=0 master_seed=0 record_every=10"
        );
    }
}

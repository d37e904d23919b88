//! Configured runs: figure tables, single configurations and the validation
//! report, all driven by one JSON document.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corrdyn::{self, FeedbackConfig, QuadSettings};
use crate::error::{Error, Result};
use crate::hilbert::{KickSign, LinearResponse, TrapBasis};
use crate::observables::{self, MomentReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fig2,
    Fig3,
    Validate,
    Single,
}

/// How the estimated atom number `N_e` is chosen for each row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NePolicy {
    EqualN,
    Fixed(usize),
}

impl NePolicy {
    pub fn n_est(self, n_atoms: usize) -> usize {
        match self {
            NePolicy::EqualN => n_atoms,
            NePolicy::Fixed(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Single-atom modes kept by the Fock-space simulator; `null` picks a
    /// count per atom number that keeps the top-mode population negligible.
    pub n_modes: Option<usize>,
    pub a_nodes: usize,
    pub fock_cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n_modes: None, a_nodes: 201, fock_cap: crate::oracle::DEFAULT_FOCK_CAP }
    }
}

pub const DEFAULT_N_LIST: [usize; 13] = [1, 2, 3, 4, 5, 6, 8, 10, 15, 20, 30, 50, 100];
pub const DEFAULT_SIGMAS: [f64; 3] = [1.0, 1.5, 2.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub omega: f64,
    /// Measurement widths in units of the ground-state momentum width.
    pub sigma_over_dp0: Vec<f64>,
    pub n_atoms: Vec<usize>,
    /// Response `f(A) = s (A + a0)`.
    pub s: f64,
    pub a0: f64,
    pub n_e_policy: NePolicy,
    #[serde(default)]
    pub kick_sign: KickSign,
    /// Single-atom truncation of the kernel path.
    pub dim: usize,
    pub oracle: OracleConfig,
    pub quad: QuadSettings,
    pub out_path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            omega: 1.0,
            sigma_over_dp0: DEFAULT_SIGMAS.to_vec(),
            n_atoms: DEFAULT_N_LIST.to_vec(),
            s: -1.0,
            a0: 0.0,
            n_e_policy: NePolicy::EqualN,
            kick_sign: KickSign::Contract,
            dim: 40,
            oracle: OracleConfig::default(),
            quad: QuadSettings::default(),
            out_path: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return bad("omega must be positive");
        }
        if self.sigma_over_dp0.is_empty() || self.n_atoms.is_empty() {
            return bad("sigma_over_dp0 and n_atoms must be non-empty");
        }
        if self.sigma_over_dp0.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return bad("sigma_over_dp0 entries must be positive");
        }
        if self.n_atoms.contains(&0) {
            return bad("n_atoms entries must be positive");
        }
        if matches!(self.n_e_policy, NePolicy::Fixed(0)) {
            return bad("fixed N_e must be positive");
        }
        if !self.s.is_finite() || !self.a0.is_finite() {
            return bad("response parameters must be finite");
        }
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.oracle.a_nodes < 2 {
            return bad("oracle.a_nodes must be at least 2");
        }
        if matches!(self.oracle.n_modes, Some(m) if m < 2) {
            return bad("oracle.n_modes must be at least 2");
        }
        self.quad.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn basis(&self) -> Result<TrapBasis> {
        TrapBasis::new(self.dim, self.omega)
    }

    pub fn feedback(&self, basis: &TrapBasis, n_atoms: usize, sigma_over_dp0: f64) -> FeedbackConfig {
        FeedbackConfig {
            sigma: sigma_over_dp0 * basis.dp0,
            response: LinearResponse::new(self.s, self.a0),
            n_est: self.n_e_policy.n_est(n_atoms),
            kick_sign: self.kick_sign,
            quad: self.quad.clone(),
            check_resolution: true,
        }
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Moments before and after one feedback loop on a condensate, kernel path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingleRun {
    pub n_atoms: usize,
    pub n_est: usize,
    pub sigma_over_dp0: f64,
    pub pre: MomentReport,
    pub post: MomentReport,
    /// Post-feedback momentum variance predicted from the moment relation;
    /// present for negative feedback without offset and `N_e = N`.
    pub predicted_var_p_scaled: Option<f64>,
    pub predicted_var_q_scaled: f64,
}

pub fn single_run(cfg: &RunConfig, n_atoms: usize, sigma_over_dp0: f64) -> Result<SingleRun> {
    let basis = cfg.basis()?;
    let fb = cfg.feedback(&basis, n_atoms, sigma_over_dp0);
    let run = || -> Result<SingleRun> {
        let pre_field = corrdyn::bec_initial_with_estimate(n_atoms, fb.n_est, &basis)?;
        let pre = observables::moments(&corrdyn::sadm(&pre_field)?, &basis)?;
        let post = observables::moments(&corrdyn::feedback_reduced(&pre_field, &fb)?, &basis)?;
        let standard = cfg.s == -1.0 && cfg.a0 == 0.0 && fb.n_est == n_atoms;
        Ok(SingleRun {
            n_atoms,
            n_est: fb.n_est,
            sigma_over_dp0,
            predicted_var_p_scaled: standard.then(|| observables::bec_var_p_scaled(n_atoms, sigma_over_dp0)),
            predicted_var_q_scaled: pre.var_q_scaled + 1.0 / (sigma_over_dp0 * sigma_over_dp0),
            pre,
            post,
        })
    };
    run().map_err(|e| e.in_row(n_atoms, sigma_over_dp0))
}

/// Tolerance on the agreement of the kernel-path position variance with the
/// back-action prediction.
pub const BACK_ACTION_TOL: f64 = 1e-3;

/// One figure row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub n_atoms: usize,
    pub sigma_over_dp0: f64,
    pub value: f64,
}

fn rows<F: Fn(&SingleRun) -> Result<f64>>(cfg: &RunConfig, value: F) -> Result<Vec<Row>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for &sigma in &cfg.sigma_over_dp0 {
        for &n in &cfg.n_atoms {
            let run = single_run(cfg, n, sigma)?;
            let v = value(&run).map_err(|e| e.in_row(n, sigma))?;
            out.push(Row { n_atoms: n, sigma_over_dp0: sigma, value: v });
        }
    }
    Ok(out)
}

/// Per-atom momentum variance after the loop, in units of `dp0^2`.
pub fn fig2_rows(cfg: &RunConfig) -> Result<Vec<Row>> {
    rows(cfg, |r| Ok(r.post.var_p_scaled))
}

/// Scaled uncertainty product after the loop. The kernel-path position
/// variance must match the back-action prediction within
/// [`BACK_ACTION_TOL`].
pub fn fig3_rows(cfg: &RunConfig) -> Result<Vec<Row>> {
    rows(cfg, |r| {
        let dev = (r.post.var_q_scaled - r.predicted_var_q_scaled).abs();
        if dev > BACK_ACTION_TOL {
            return Err(Error::ToleranceFailure {
                check: "position variance against back-action prediction".into(),
                observed: dev,
                tolerance: BACK_ACTION_TOL,
            });
        }
        Ok(r.post.uncertainty_product_scaled)
    })
}

pub const FIG2_HEADER: &str = "N,sigma_over_dp0,var_p_scaled";
pub const FIG3_HEADER: &str = "N,sigma_over_dp0,uncertainty_product_scaled";

/// Float with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_csv(header: &str, rows: &[Row]) -> String {
    let mut s = String::new();
    s.push_str(header);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.n_atoms, format_float(r.sigma_over_dp0), format_float(r.value));
    }
    s
}

pub fn run_fig2(cfg: &RunConfig) -> Result<String> {
    Ok(to_csv(FIG2_HEADER, &fig2_rows(cfg)?))
}

pub fn run_fig3(cfg: &RunConfig) -> Result<String> {
    Ok(to_csv(FIG3_HEADER, &fig3_rows(cfg)?))
}

/// JSON document for the first atom number and width of the config.
pub fn run_single(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let run = single_run(cfg, cfg.n_atoms[0], cfg.sigma_over_dp0[0])?;
    Ok(serde_json::to_string_pretty(&run)? + "\n")
}

/// Runs every validation criterion; returns the JSON report and whether all
/// checks passed.
pub fn run_validate(cfg: &RunConfig) -> Result<(String, bool)> {
    cfg.validate()?;
    let ctx = crate::validation::Context::from_config(cfg);
    let criteria = crate::validation::run_all(&ctx)?;
    let report = crate::validation::report(&criteria);
    Ok((serde_json::to_string_pretty(&report)? + "\n", report.all_pass))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_pretty_json()).unwrap();
        assert_eq!(back, cfg);
        let partial = RunConfig::from_json(r#"{"n_atoms": [2, 3], "n_e_policy": {"fixed": 4}}"#).unwrap();
        assert_eq!(partial.n_atoms, vec![2, 3]);
        assert_eq!(partial.n_e_policy.n_est(2), 4);
        assert_eq!(partial.dim, 40);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            r#"{"n_atoms": []}"#,
            r#"{"sigma_over_dp0": [0.0]}"#,
            r#"{"omega": -1}"#,
            r#"{"unknown": 1}"#,
            r#"{"quad": {"n_a": 8}}"#,
            "not json",
        ] {
            let err = RunConfig::from_json(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn csv_layout() {
        let rows = [Row { n_atoms: 2, sigma_over_dp0: 1.5, value: 0.1 }];
        let csv = to_csv(FIG2_HEADER, &rows);
        assert_eq!(csv, "N,sigma_over_dp0,var_p_scaled\n2,1.5000000000000000e0,1.0000000000000001e-1\n");
    }

    #[test]
    fn single_atom_row_is_the_measurement_width() {
        let cfg = RunConfig { n_atoms: vec![1], sigma_over_dp0: vec![1.0], ..RunConfig::default() };
        let rows = fig2_rows(&cfg).unwrap();
        assert!((rows[0].value - 1.0).abs() < 1e-4);
    }
}

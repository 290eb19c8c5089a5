//! Scenario configuration (JSON, dB-scale fields) and its validated linear form.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ConfigError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyParams {
    pub rho0: f64,
    pub step_c: f64,
    pub eps_inner: f64,
    pub eps_outer: f64,
    pub eps_bisect: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self {
            rho0: 100.0,
            step_c: 0.85,
            eps_inner: 1e-3,
            eps_outer: 1e-7,
            eps_bisect: 1e-9,
            max_inner: 200,
            max_outer: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdrParams {
    pub eps_converge: f64,
    pub max_ao_iters: usize,
    pub rank_one_ratio_tol: f64,
    pub randomizations: usize,
}

impl Default for SdrParams {
    fn default() -> Self {
        Self { eps_converge: 1e-3, max_ao_iters: 150, rank_one_ratio_tol: 1e-6, randomizations: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_users: usize,
    pub n_targets: usize,
    pub n_irs: usize,
    /// Radians from array broadside.
    pub target_angles: Vec<f64>,
    /// One entry per user, or a single entry shared by all users.
    pub sinr_user_db: Vec<f64>,
    pub sinr_radar_db: f64,
    /// mW²; `null`, `"inf"` or absent means no constraint.
    #[serde(serialize_with = "ser_limit", deserialize_with = "de_limit")]
    pub cross_corr_limit: f64,
    pub noise_power_dbm: f64,
    pub target_rcs_power_dbm: f64,
    pub irs_x: f64,
    pub bs_height: f64,
    pub irs_height: f64,
    pub user_height: f64,
    pub user_radius: f64,
    pub path_loss_ref_db: f64,
    pub alpha_bs_irs: f64,
    pub alpha_irs_user: f64,
    pub alpha_bs_user: f64,
    pub rician_factor_db: f64,
    pub antenna_spacing_ratio: f64,
    pub penalty: PenaltyParams,
    pub sdr: SdrParams,
    pub seed: u64,
}

fn ser_limit<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_limit<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Limit {
        Num(f64),
        Text(String),
        Null(()),
    }
    match Option::<Limit>::deserialize(d)? {
        None | Some(Limit::Null(())) => Ok(f64::INFINITY),
        Some(Limit::Num(x)) => Ok(x),
        Some(Limit::Text(t)) => match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
            other => other.parse().map_err(serde::de::Error::custom),
        },
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_tx: 8,
            n_rx: 8,
            n_users: 5,
            n_targets: 3,
            n_irs: 50,
            target_angles: [-40.0f64, 0.0, 40.0].iter().map(|d| d.to_radians()).collect(),
            sinr_user_db: vec![20.0],
            sinr_radar_db: 10.0,
            cross_corr_limit: f64::INFINITY,
            noise_power_dbm: -80.0,
            target_rcs_power_dbm: -70.0,
            irs_x: 50.0,
            bs_height: 3.5,
            irs_height: 3.5,
            user_height: 1.0,
            user_radius: 2.0,
            path_loss_ref_db: -30.0,
            alpha_bs_irs: 2.2,
            alpha_irs_user: 2.2,
            alpha_bs_user: 3.6,
            rician_factor_db: 3.0,
            antenna_spacing_ratio: 0.5,
            penalty: PenaltyParams::default(),
            sdr: SdrParams::default(),
            seed: 1,
        }
    }
}

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_lin(dbm) / 1000.0
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

impl SystemConfig {
    /// Outage experiment setup: IRS closer to the BS and a finite
    /// cross-correlation budget.
    pub fn outage_preset() -> Self {
        Self { irs_x: 20.0, cross_corr_limit: 1.0, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<Scenario, ConfigError> {
        Scenario::new(self.clone())
    }
}

/// A validated configuration with every dB quantity converted once.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub cfg: SystemConfig,
    /// σ² in W.
    pub noise_power: f64,
    /// σ_β² in W.
    pub rcs_power: f64,
    /// Linear per-user thresholds, length K.
    pub sinr_user: Vec<f64>,
    pub sinr_radar: f64,
    pub path_loss_ref: f64,
    pub rician_factor: f64,
}

impl Scenario {
    pub fn new(cfg: SystemConfig) -> Result<Self, ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, v) in [
            ("n_tx", cfg.n_tx),
            ("n_rx", cfg.n_rx),
            ("n_users", cfg.n_users),
            ("n_targets", cfg.n_targets),
            ("n_irs", cfg.n_irs),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if cfg.target_angles.len() != cfg.n_targets {
            return bad(format!(
                "target_angles has {} entries but n_targets = {}",
                cfg.target_angles.len(),
                cfg.n_targets
            ));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        for (i, &a) in cfg.target_angles.iter().enumerate() {
            if !(a > -half_pi && a < half_pi) {
                return bad(format!("target angle {a} outside (-pi/2, pi/2)"));
            }
            if cfg.target_angles[..i].iter().any(|&b| b == a) {
                return bad(format!("duplicate target angle {a}"));
            }
        }
        let sinr_user: Vec<f64> = match cfg.sinr_user_db.len() {
            1 => vec![db_to_lin(cfg.sinr_user_db[0]); cfg.n_users],
            n if n == cfg.n_users => cfg.sinr_user_db.iter().map(|&d| db_to_lin(d)).collect(),
            n => return bad(format!("sinr_user_db has {n} entries for {} users", cfg.n_users)),
        };
        let finite = [
            ("sinr_radar_db", cfg.sinr_radar_db),
            ("noise_power_dbm", cfg.noise_power_dbm),
            ("target_rcs_power_dbm", cfg.target_rcs_power_dbm),
            ("irs_x", cfg.irs_x),
            ("path_loss_ref_db", cfg.path_loss_ref_db),
            ("rician_factor_db", cfg.rician_factor_db),
            ("alpha_bs_irs", cfg.alpha_bs_irs),
            ("alpha_irs_user", cfg.alpha_irs_user),
            ("alpha_bs_user", cfg.alpha_bs_user),
            ("bs_height", cfg.bs_height),
            ("irs_height", cfg.irs_height),
            ("user_height", cfg.user_height),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if cfg.sinr_user_db.iter().any(|v| !v.is_finite()) {
            return bad("sinr_user_db entries must be finite".into());
        }
        if cfg.cross_corr_limit.is_nan() || cfg.cross_corr_limit < 0.0 {
            return bad("cross_corr_limit must be nonnegative".into());
        }
        if !(cfg.user_radius >= 0.0 && cfg.antenna_spacing_ratio > 0.0) {
            return bad("user_radius and antenna_spacing_ratio must be positive".into());
        }
        let p = &cfg.penalty;
        if !(p.step_c > 0.0 && p.step_c < 1.0) {
            return bad(format!("penalty.step_c = {} outside (0, 1)", p.step_c));
        }
        if !(p.rho0 > 0.0 && p.eps_inner > 0.0 && p.eps_outer > 0.0 && p.eps_bisect > 0.0) {
            return bad("penalty rho0 and tolerances must be positive".into());
        }
        let s = &cfg.sdr;
        if !(s.eps_converge > 0.0 && s.rank_one_ratio_tol > 0.0) {
            return bad("sdr tolerances must be positive".into());
        }
        if s.max_ao_iters == 0 || p.max_inner == 0 || p.max_outer == 0 {
            return bad("iteration caps must be at least 1".into());
        }
        Ok(Self {
            noise_power: dbm_to_watts(cfg.noise_power_dbm),
            rcs_power: dbm_to_watts(cfg.target_rcs_power_dbm),
            sinr_user,
            sinr_radar: db_to_lin(cfg.sinr_radar_db),
            path_loss_ref: db_to_lin(cfg.path_loss_ref_db),
            rician_factor: db_to_lin(cfg.rician_factor_db),
            cfg,
        })
    }

    pub fn has_xcorr_limit(&self) -> bool {
        self.cfg.cross_corr_limit.is_finite()
    }
}

//! Claim-by-claim verification of a registered system.
//!
//! Every check produces a [`ClaimRecord`] carrying the anchor label of the
//! identity it tests, the worst residual over the sample set, the tolerance
//! and a status. Checks of transcribed (displayed) data that disagree with
//! the derived objects are reported as `MismatchReported` rather than failing
//! the run.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{descriptor, DescriptorSummary, Params};

mod suite;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    MismatchReported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    Conservation,
    DriftLaw,
    Darboux,
    Gradient,
    Degeneracy,
    Jacobi,
    Compatibility,
    Pencil,
    Casimir,
    Conformal,
    Structure,
    Comparison,
    Multiplier,
    Hamiltonian,
    Canonical,
    Reduction,
    Transform,
    Drift,
    Condition,
    NegativeControl,
}

/// Which side of the tolerance counts as success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    pub anchor: String,
    pub kind: ClaimKind,
    pub residual_max: f64,
    pub tolerance: f64,
    pub expect: Expect,
    pub samples: usize,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub component: String,
    pub max_abs_diff: f64,
    /// `displayed / derived` when that ratio is constant over the samples.
    pub ratio: Option<f64>,
    pub matches: bool,
}

/// Displayed vs derived `(U, V)` components of one structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorComparison {
    pub structure: String,
    pub anchor: String,
    pub components: Vec<ComponentMatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub samples: usize,
    pub version: String,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub system: String,
    pub params: Params,
    pub descriptor: serde_json::Value,
    pub claims: Vec<ClaimRecord>,
    pub comparisons: Vec<VectorComparison>,
    pub environment: Environment,
    pub passed: bool,
}

impl VerificationReport {
    pub fn claim(&self, id: &str) -> Option<&ClaimRecord> {
        self.claims.iter().find(|c| c.id == id)
    }

    pub fn count(&self, status: Status) -> usize {
        self.claims.iter().filter(|c| c.status == status).count()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Residual tolerances. `pointwise` is the base that `--tol` overrides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub pointwise: f64,
    pub degeneracy: f64,
    pub casimir: f64,
    pub matrix: f64,
    pub jacobi_uv: f64,
    pub jacobi_bruteforce: f64,
    pub pencil: f64,
    pub jlm: f64,
    pub conformal: f64,
    pub gradient: f64,
    pub transform: f64,
    pub drift: f64,
    pub law: f64,
    pub time_map: f64,
    /// Lower bound for negative controls.
    pub corrupted: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pointwise: 1e-10,
            degeneracy: 1e-12,
            casimir: 1e-12,
            matrix: 1e-12,
            jacobi_uv: 1e-8,
            jacobi_bruteforce: 1e-5,
            pencil: 1e-5,
            jlm: 1e-8,
            conformal: 1e-8,
            gradient: 1e-6,
            transform: 1e-6,
            drift: 1e-7,
            law: 1e-5,
            time_map: 1e-6,
            corrupted: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: Option<f64>,
    /// Omit the timestamp so identical runs give identical bytes.
    pub deterministic: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            tol: None,
            deterministic: true,
        }
    }
}

impl VerifyOptions {
    pub fn tolerances(&self) -> Tolerances {
        let mut t = Tolerances::default();
        if let Some(p) = self.tol {
            t.pointwise = p;
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("samples must be at least 1".into()));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig("tol must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Run the full claim suite for a registered system.
pub fn verify_system(name: &str, overrides: &[(String, f64)], opts: &VerifyOptions) -> Result<VerificationReport> {
    opts.validate()?;
    let desc = descriptor(name)?;
    let params = desc.resolve(overrides)?;
    desc.check(&params)?;
    let sys = desc.instantiate(overrides)?;
    let summary: DescriptorSummary = desc.summary(&params)?;
    let (mut claims, comparisons) = suite::run(&sys, opts)?;
    claims.sort_by(|a, b| a.id.cmp(&b.id));
    let passed = claims.iter().all(|c| c.status != Status::Fail);
    Ok(VerificationReport {
        system: name.to_string(),
        params,
        descriptor: serde_json::to_value(summary).map_err(|e| Error::Io(e.to_string()))?,
        claims,
        comparisons,
        environment: Environment {
            seed: opts.seed,
            samples: opts.samples,
            version: VERSION.to_string(),
            tolerance: opts.tolerances().pointwise,
            timestamp: (!opts.deterministic).then(timestamp),
        },
        passed,
    })
}

fn timestamp() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedClaim {
    pub system: String,
    #[serde(flatten)]
    pub claim: ClaimRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub system: String,
    pub environment: Environment,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub sources: Vec<SourceInfo>,
    pub claims: Vec<MergedClaim>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Concatenate reports; a warning is set when their versions differ.
pub fn merge(reports: &[VerificationReport]) -> Result<MergedReport> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("nothing to merge".into()));
    }
    let mut versions: Vec<&str> = reports.iter().map(|r| r.environment.version.as_str()).collect();
    versions.sort_unstable();
    versions.dedup();
    let warning = (versions.len() > 1).then(|| format!("reports come from different versions: {}", versions.join(", ")));
    Ok(MergedReport {
        sources: reports
            .iter()
            .map(|r| SourceInfo {
                system: r.system.clone(),
                environment: r.environment.clone(),
                passed: r.passed,
            })
            .collect(),
        claims: reports
            .iter()
            .flat_map(|r| {
                r.claims.iter().map(|c| MergedClaim {
                    system: r.system.clone(),
                    claim: c.clone(),
                })
            })
            .collect(),
        passed: reports.iter().all(|r| r.passed),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            samples: 40,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn claim_ids_are_unique_and_sorted() {
        let r = verify_system("lorenz_conservative", &[], &quick()).unwrap();
        let ids: Vec<_> = r.claims.iter().map(|c| c.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(ids, sorted);
        assert!(r.claims.iter().all(|c| !c.anchor.is_empty()));
    }

    #[test]
    fn lorenz_limits_pass() {
        for name in ["lorenz_rho0", "lorenz_conservative"] {
            let r = verify_system(name, &[], &quick()).unwrap();
            let bad: Vec<_> = r.claims.iter().filter(|c| c.status == Status::Fail).collect();
            assert!(bad.is_empty(), "{name}: {bad:#?}");
        }
    }

    #[test]
    fn constraint_violation_is_an_error() {
        let e = verify_system("lu_original", &[("delta".into(), 5.0)], &quick()).unwrap_err();
        assert!(matches!(e, Error::ConstraintViolated { .. }));
        assert!(matches!(
            verify_system("nope", &[], &quick()),
            Err(Error::UnknownSystem(_))
        ));
    }

    #[test]
    fn zero_samples_rejected() {
        let o = VerifyOptions {
            samples: 0,
            ..quick()
        };
        assert!(verify_system("shivamoggi", &[], &o).is_err());
    }

    #[test]
    fn merge_flags_version_conflicts() {
        let a = verify_system("lorenz_rho0", &[], &quick()).unwrap();
        let mut b = verify_system("lorenz_conservative", &[], &quick()).unwrap();
        let m = merge(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.claims.len(), a.claims.len() + b.claims.len());
        assert!(m.warning.is_none());
        b.environment.version = "0.0.0-other".into();
        assert!(merge(&[a, b]).unwrap().warning.is_some());
        assert!(merge(&[]).is_err());
    }

    #[test]
    fn deterministic_runs_are_identical() {
        let a = verify_system("lorenz_rho0", &[], &quick()).unwrap().to_json().unwrap();
        let b = verify_system("lorenz_rho0", &[], &quick()).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("timestamp"));
    }
}

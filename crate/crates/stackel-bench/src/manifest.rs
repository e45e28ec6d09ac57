//! Run manifests: everything needed to reproduce one solver run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stackel_core::pigd::{GradientRoute, PIGDConfig};
use stackel_core::problems::{
    generate_charging_instances, generate_dispatch_instances, parse_instance, ChargingInstance, DispatchInstance,
    Instance,
};
use stackel_core::proximal::ProximalConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Pigd,
    Proximal,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Pigd => "pigd",
            SolverKind::Proximal => "proximal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Reduced,
    Lifted,
}

impl From<Route> for GradientRoute {
    fn from(r: Route) -> Self {
        match r {
            Route::Reduced => GradientRoute::Reduced,
            Route::Lifted => GradientRoute::Lifted,
        }
    }
}

/// Solver settings that differ from the library defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route: Option<Route>,
}

impl Overrides {
    pub fn pigd_config(&self) -> PIGDConfig {
        let mut c = PIGDConfig::default();
        if let Some(v) = self.rho {
            c.leader_step = v;
        }
        if let Some(v) = self.eps {
            c.stop_eps = v;
        }
        if let Some(v) = self.t_max {
            c.t_max = v;
        }
        if let Some(v) = self.trace_every {
            c.trace_every = v;
        }
        if let Some(r) = self.route {
            c.route = r.into();
        }
        c
    }

    pub fn proximal_config(&self) -> ProximalConfig {
        let mut c = ProximalConfig::default();
        if let Some(v) = self.eps {
            c.stop_eps = v;
        }
        if let Some(v) = self.t_max {
            c.t_max = v;
        }
        if let Some(v) = self.trace_every {
            c.trace_every = v;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub solver: SolverKind,
    /// Instance file path, `charging` / `dispatch` for the built-in default
    /// instances, or generator parameters `charging:N` / `dispatch:N:M`
    /// drawn with `seed`.
    pub instance: String,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub overrides: Overrides,
}

impl RunManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.out.as_os_str().is_empty() {
            bail!("output directory is empty");
        }
        self.overrides.pigd_config().validate()?;
        self.overrides.proximal_config().validate()?;
        Ok(())
    }
}

/// Capacity of generated charging instances, as a multiple of `B/2`.
pub const CHARGING_CAPACITY_FACTOR: f64 = 1.5;

/// Resolves an instance argument (see [`RunManifest::instance`]).
pub fn resolve_instance(arg: &str, seed: u64) -> Result<Instance> {
    let dims = |rest: &str, want: usize| -> Result<Vec<usize>> {
        let v: Vec<usize> = rest
            .split(':')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad generator parameters in `{arg}`"))?;
        if v.len() != want || v.contains(&0) {
            bail!("`{arg}` needs {want} positive size(s)");
        }
        Ok(v)
    };
    match arg {
        "charging" => Ok(Instance::Charging(ChargingInstance::default_instance())),
        "dispatch" => Ok(Instance::Dispatch(DispatchInstance::default_instance())),
        _ if arg.starts_with("charging:") => {
            let n = dims(&arg["charging:".len()..], 1)?[0];
            Ok(Instance::Charging(generate_charging_instances(seed, n, 1, CHARGING_CAPACITY_FACTOR).remove(0)))
        }
        _ if arg.starts_with("dispatch:") => {
            let d = dims(&arg["dispatch:".len()..], 2)?;
            Ok(Instance::Dispatch(generate_dispatch_instances(seed, d[0], d[1], 1).remove(0)))
        }
        path => parse_instance(Path::new(path)).with_context(|| format!("reading instance {path}")),
    }
}

/// Output root: `$STACKEL_OUT` if set, else `runs`.
pub fn default_output_root() -> PathBuf {
    std::env::var_os(crate::OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips_through_toml() {
        let m = RunManifest {
            solver: SolverKind::Proximal,
            instance: "runs/x.toml".into(),
            seed: 9,
            out: "runs/a".into(),
            overrides: Overrides { rho: Some(0.5), t_max: Some(10), route: Some(Route::Lifted), ..Default::default() },
        };
        assert_eq!(RunManifest::from_toml(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn overrides_reach_the_solver_configs() {
        let o = Overrides { rho: Some(0.2), eps: Some(1e-4), t_max: Some(7), trace_every: Some(3), route: None };
        let p = o.pigd_config();
        assert_eq!((p.leader_step, p.stop_eps, p.t_max, p.trace_every), (0.2, 1e-4, 7, 3));
        let q = o.proximal_config();
        assert_eq!((q.stop_eps, q.t_max, q.trace_every), (1e-4, 7, 3));
    }

    #[test]
    fn missing_instance_file_is_an_error() {
        assert!(resolve_instance("/nonexistent/instance.toml", 0).is_err());
        assert!(matches!(resolve_instance("charging", 0).unwrap(), Instance::Charging(_)));
    }

    #[test]
    fn generator_parameters_use_the_seed() {
        let Instance::Dispatch(d) = resolve_instance("dispatch:6:2", 4).unwrap() else { panic!() };
        assert_eq!((d.n, d.m), (6, 2));
        assert_eq!(Instance::Dispatch(d), resolve_instance("dispatch:6:2", 4).unwrap());
        assert_ne!(resolve_instance("charging:3", 1).unwrap(), resolve_instance("charging:3", 2).unwrap());
        assert!(resolve_instance("dispatch:6", 0).is_err());
        assert!(resolve_instance("charging:0", 0).is_err());
    }
}

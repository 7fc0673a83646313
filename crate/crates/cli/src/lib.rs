//! Command-line driver: configuration, orchestration and run manifests.

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{parse_config, ConfigError, Mode, RunConfig};
pub use run::{run, Manifest, RunError, RunSummary};

#[derive(Debug, Parser)]
#[command(name = "twistqw", version, about = "Transmission and resonances of a twisted quantum waveguide")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured mode (levels, sweep, trace, cscale).
    #[arg(long)]
    pub mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for energy points.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Grid spacing in nm.
    #[arg(long)]
    pub resolution: Option<f64>,
}

/// Resolves the configuration named by `cli`, applying flag overrides.
pub fn load(cli: &Cli) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| ConfigError {
        path: cli.config.display().to_string(),
        message: e.to_string(),
    })?;
    let mode = cli.mode.as_deref().map(str::parse).transpose()?;
    let mut cfg = parse_config(&text, mode)?;
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(ConfigError {
                path: "--workers".into(),
                message: "must be ≥ 1".into(),
            }
            .into());
        }
        cfg.workers = Some(w);
    }
    if let Some(r) = cli.resolution {
        if !(r > 0.0 && r.is_finite()) {
            return Err(ConfigError {
                path: "--resolution".into(),
                message: format!("must be a positive number, got {r}"),
            }
            .into());
        }
        cfg.resolution = r;
    }
    Ok(cfg)
}

/// Runs `cfg` on a pool of the configured size.
pub fn execute(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    match cfg.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| RunError::Config(ConfigError {
                    path: "workers".into(),
                    message: e.to_string(),
                }))?;
            pool.install(|| run(cfg))
        }
        None => run(cfg),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match load(&cli).and_then(|cfg| execute(&cfg)) {
        Ok(summary) => {
            eprintln!("wrote {}", summary.manifest_path.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &std::path::Path, text: &str) -> PathBuf {
        let p = dir.join("run.toml");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn levels_mode_writes_table_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(dir.path(), "mode = \"levels\"\n[waveguide]\nnu = 3.95\n");
        let out = dir.path().join("out");
        let code = main_with_args(["twistqw", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(out.join("levels.csv")).unwrap();
        let inside: Vec<&str> = text.lines().filter(|l| l.starts_with("level,") && l.ends_with(",true")).collect();
        assert_eq!(inside.len(), 3, "{text}");
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["status"], "ok");
        assert_eq!(manifest["config"]["spec"]["nu"], 3.95);
        assert!(manifest["config"]["tolerances"]["unitarity"].is_number());
    }

    #[test]
    fn config_errors_exit_with_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(dir.path(), "mode = \"levels\"\n[waveguide]\nnu = -1\n");
        assert_eq!(main_with_args(["twistqw", "--config", cfg.to_str().unwrap()]), 2);
        let cfg = write(dir.path(), "mode = \"levels\"\n");
        assert_eq!(main_with_args(["twistqw", "--config", cfg.to_str().unwrap(), "--mode", "bogus"]), 2);
        assert_eq!(main_with_args(["twistqw", "--config", "/nonexistent/run.toml"]), 2);
        assert_eq!(main_with_args(["twistqw"]), 2);
    }

    #[test]
    fn solver_failure_exits_with_three() {
        let dir = tempfile::tempdir().unwrap();
        // Window opens below the first threshold.
        let cfg = write(
            dir.path(),
            "mode = \"sweep\"\n[waveguide]\nnu = 0.0\n[solver]\nrepresentation = \"mode-space\"\nmodes = 4\n[sweep]\ne_min = 60.0\ne_max = 80.0\npoints = 4\n",
        );
        let out = dir.path().join("o");
        let code = main_with_args(["twistqw", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 3);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["partial"], true);
    }

    #[test]
    fn flat_sweep_has_no_resonances() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(
            dir.path(),
            "mode = \"sweep\"\n[waveguide]\nnu = 0.0\n[solver]\nrepresentation = \"mode-space\"\nmodes = 6\n[sweep]\ne_min = 75.0\ne_max = 110.0\npoints = 50\n",
        );
        let out = dir.path().join("o");
        let code = main_with_args(["twistqw", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "1"]);
        assert_eq!(code, 0);
        let spectrum = std::fs::read_to_string(out.join("spectrum_ch1.csv")).unwrap();
        let body = twistqw::output::csv_body(&spectrum);
        assert_eq!(body.lines().count(), 51);
        assert!(body.starts_with("E_meV,T_1,theta_1_rad,R_sum,unitarity_defect\n"));
        let res = std::fs::read_to_string(out.join("resonances.csv")).unwrap();
        assert_eq!(twistqw::output::csv_body(&res).lines().count(), 1);
    }
}

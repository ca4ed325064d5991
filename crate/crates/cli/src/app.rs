//! Command-line interface: argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use jcoupling_core::io;

use crate::commands::{self, output_dir};
use crate::config::ProtocolPreset;
use crate::error::Result;
use crate::RunConfig;

#[derive(Parser)]
#[command(
    name = "jcoupling",
    version,
    about = "Simulate and analyze NV-detected J-coupling spectroscopy"
)]
pub struct Cli {
    /// Worker threads for trajectory averaging and sampling.
    #[arg(long, global = true, env = "JCOUPLING_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Propagate, emit, read out and analyze; writes traces, spectrum and peak report.
    Simulate(Common),
    /// Sample the coupling posterior for a saved signal.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Signal CSV as written by `simulate`.
        #[arg(long)]
        signal: PathBuf,
    },
    /// Predict resonance positions from the molecule's couplings.
    Predict(Common),
    /// Re-analyze a saved magnetization trace.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Trace CSV as written by `simulate`.
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Args)]
pub struct Common {
    /// JSON run configuration (a previous run's manifest.json also works).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Protocol preset, replacing the configured protocol.
    #[arg(long, value_enum)]
    preset: Option<ProtocolPreset>,
    #[arg(long)]
    seed: Option<u64>,
    /// Readout repetitions averaged by the photon model.
    #[arg(long)]
    reps: Option<u64>,
    /// Pulse-noise trajectories averaged into the trace.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Toggle a noise source: ou, cross_talk, photon or t2 (e.g. `--noise ou=on`).
    #[arg(long = "noise", value_name = "SOURCE=on|off")]
    noise: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.protocol = crate::config::ProtocolSource::Preset(p);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.photon.n_reps = r;
        }
        if let Some(t) = self.trajectories {
            cfg.trajectories = t;
        }
        for n in &self.noise {
            cfg.noise.set(n)?;
        }
        Ok(cfg)
    }
}

fn render<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(io::to_json_pretty(value)?)
}

/// Executes a parsed command line; returns the JSON summary for stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.config()?;
            let report = commands::run_simulate(&cfg, &output_dir(c.out.clone(), &cfg))?;
            render(&report)
        }
        Command::Infer { common, signal } => {
            let cfg = common.config()?;
            let summary = commands::run_infer(&cfg, &signal, &output_dir(common.out.clone(), &cfg))?;
            render(&summary)
        }
        Command::Predict(c) => {
            let cfg = c.config()?;
            let table = commands::run_predict(&cfg, &output_dir(c.out.clone(), &cfg))?;
            render(&table)
        }
        Command::Spectrum { common, trace } => {
            let cfg = common.config()?;
            let report = commands::run_spectrum(&cfg, &trace, &output_dir(common.out.clone(), &cfg))?;
            render(&report)
        }
    }
}

#[cfg(test)]
mod tests {
    //! Whole command lines run in-process.

    use std::path::Path;

    use super::*;
    use crate::CliError;

    fn invoke(args: &[&str]) -> std::result::Result<String, CliError> {
        let cli =
            Cli::try_parse_from(std::iter::once("jcoupling").chain(args.iter().copied())).expect("arguments parse");
        run(cli)
    }

    fn ok(args: &[&str]) -> String {
        invoke(args).unwrap_or_else(|e| panic!("{args:?} failed: {e}"))
    }

    fn fails(args: &[&str]) -> CliError {
        invoke(args).expect_err("command should fail")
    }

    fn path(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    /// Small noisy configuration: a proton pair with pulse noise and photon noise.
    const NOISY_PAIR: &str = r#"{
      "molecule": {"preset": "proton_pair"},
      "protocol": {"explicit": {
        "tau": 0.004347826086956522, "n_stages": 64, "rabi_hz": 50000.0,
        "targeted_species": ["H"], "mode": "standard", "b_ext": 2.0, "t2": 0.6
      }},
      "noise": {"ou": true},
      "trajectories": 3,
      "chunk": 2,
      "seed": 42
    }"#;

    fn files(dir: &Path) -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    }

    fn assert_same_outputs(a: &Path, b: &Path) {
        let names = files(a);
        assert_eq!(names, files(b));
        for n in names {
            let (x, y) = (std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap());
            assert!(x == y, "{n} differs between runs");
        }
    }

    #[test]
    fn same_seed_gives_byte_identical_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        std::fs::write(&cfg, NOISY_PAIR).unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        ok(&["simulate", "--config", path(&cfg), "--out", path(&a)]);
        ok(&["simulate", "--config", path(&cfg), "--out", path(&b)]);
        assert_eq!(
            files(&a),
            [
                "clean_signal.csv",
                "field.csv",
                "manifest.json",
                "peaks.json",
                "signal.csv",
                "spectrum.csv",
                "trace.csv"
            ]
        );
        assert_same_outputs(&a, &b);

        let c = dir.path().join("c");
        ok(&["simulate", "--config", path(&cfg), "--seed", "43", "--out", path(&c)]);
        assert_ne!(
            std::fs::read(a.join("signal.csv")).unwrap(),
            std::fs::read(c.join("signal.csv")).unwrap()
        );
    }

    #[test]
    fn manifest_reproduces_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        std::fs::write(&cfg, NOISY_PAIR).unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        ok(&["simulate", "--config", path(&cfg), "--reps", "500", "--out", path(&a)]);
        let manifest = a.join("manifest.json");
        ok(&["simulate", "--config", path(&manifest), "--out", path(&b)]);
        assert_same_outputs(&a, &b);
    }

    #[test]
    fn spectrum_reanalyzes_a_saved_trace() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        std::fs::write(&cfg, NOISY_PAIR).unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        ok(&["simulate", "--config", path(&cfg), "--out", path(&a)]);
        let trace = a.join("trace.csv");
        ok(&[
            "spectrum",
            "--config",
            path(&cfg),
            "--trace",
            path(&trace),
            "--out",
            path(&b),
        ]);
        for n in ["spectrum.csv", "signal.csv", "peaks.json"] {
            assert_eq!(
                std::fs::read(a.join(n)).unwrap(),
                std::fs::read(b.join(n)).unwrap(),
                "{n}"
            );
        }
    }

    #[test]
    fn predict_counts_lines() {
        let dir = tempfile::tempdir().unwrap();
        let count = |args: &[&str]| {
            let text = ok(args);
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            v["lines"].as_array().unwrap().len()
        };
        let out = dir.path().join("p");
        assert_eq!(count(&["predict", "--preset", "case1", "--out", path(&out)]), 5);
        assert_eq!(count(&["predict", "--preset", "case2", "--out", path(&out)]), 10);
        let cfg = dir.path().join("pair.json");
        std::fs::write(&cfg, NOISY_PAIR).unwrap();
        assert_eq!(count(&["predict", "--config", path(&cfg), "--out", path(&out)]), 1);
        assert!(out.join("resonances.json").exists());
    }

    #[test]
    fn unknown_config_key_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.json");
        std::fs::write(&cfg, "{\n  \"seed\": 1,\n  \"trajectory\": 4\n}").unwrap();
        let err = fails(&["predict", "--config", path(&cfg), "--out", path(dir.path())]);
        assert_eq!(err.exit_code(), 2);
        let err = err.to_string();
        assert!(
            err.contains("unknown field `trajectory`") && err.contains("line 3"),
            "{err}"
        );
    }

    #[test]
    fn bad_noise_flag_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            fails(&["predict", "--noise", "laser=on", "--out", path(dir.path())]).exit_code(),
            2
        );
    }

    #[test]
    fn missing_inputs_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        let err = fails(&["infer", "--signal", path(&missing), "--out", path(dir.path())]);
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("nope.csv"));

        let err = fails(&["predict", "--config", path(&dir.path().join("none.json"))]);
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn infer_rejects_mismatched_grid() {
        let dir = tempfile::tempdir().unwrap();
        let signal = dir.path().join("signal.csv");
        std::fs::write(&signal, "stage,t,estimate\n1,0.1,0.0\n2,0.2,0.0\n").unwrap();
        let err = fails(&["infer", "--signal", path(&signal), "--out", path(dir.path())]);
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("grid mismatch"));
    }

    #[test]
    fn infer_recovers_pair_coupling_from_clean_signal() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        let quiet = NOISY_PAIR.replace(r#""noise": {"ou": true}"#, r#""noise": {"ou": false, "photon": false}"#);
        std::fs::write(&cfg, &quiet).unwrap();
        let sim = dir.path().join("sim");
        ok(&["simulate", "--config", path(&cfg), "--out", path(&sim)]);

        let infer_cfg = dir.path().join("infer.json");
        let with_sampler = quiet.replacen(
            '{',
            r#"{"infer": {"noise_sigma": 1e-5, "prior_half_width_hz": 1.0,
                "sampler": {"chains": 2, "kept": 2000, "burn_in": 500, "grid_step_hz": 0.25,
                            "rhat_threshold": 1.2, "seed": 0}},"#,
            1,
        );
        std::fs::write(&infer_cfg, with_sampler).unwrap();
        let post = dir.path().join("post");
        let text = ok(&[
            "infer",
            "--config",
            path(&infer_cfg),
            "--signal",
            path(&sim.join("signal.csv")),
            "--out",
            path(&post),
        ]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mean = v["mean_hz"][0].as_f64().unwrap();
        let sigma = v["sigma_hz"][0].as_f64().unwrap();
        assert!((mean - 8.0).abs() < 0.05, "mean {mean}");
        assert!(sigma < 0.1, "sigma {sigma}");
        assert!(post.join("posterior.csv").exists() && post.join("posterior.json").exists());
    }
}

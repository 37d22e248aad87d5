//! Command dispatch and the artifact DAG behind `--dry-run`.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::ablate::{ablate, Sweep};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::layout::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Label,
    Split,
    Pretrain,
    Train,
    Score,
    Evaluate,
    Ablate(Sweep),
    Plot,
    CleanDeployment,
}

/// An artifact a command reads, with the command that produces it.
#[derive(Debug, Clone)]
pub struct Input {
    pub path: PathBuf,
    pub producer: &'static str,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub command: String,
    pub inputs: Vec<Input>,
    pub outputs: Vec<PathBuf>,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Label => "label",
            Command::Split => "split",
            Command::Pretrain => "pretrain",
            Command::Train => "train",
            Command::Score => "score",
            Command::Evaluate => "evaluate",
            Command::Ablate(_) => "ablate",
            Command::Plot => "plot",
            Command::CleanDeployment => "clean-deployment",
        }
    }

    /// Declared inputs and outputs under `cfg`.
    pub fn step(self, cfg: &ExperimentConfig) -> Step {
        let l = Layout::new(&cfg.out_dir);
        let manifest = |dir: PathBuf| dir.join(forecastad::data::format::MANIFEST_FILE);
        let per_seed = |f: &dyn Fn(u64) -> PathBuf| cfg.eval.seeds.iter().map(|&s| f(s)).collect::<Vec<_>>();
        let input = |path: PathBuf, producer| Input { path, producer };
        let pretrained = || per_seed(&|s| l.pretrained(s)).into_iter().map(|p| input(p, "pretrain"));
        let forecasters = || per_seed(&|s| l.forecaster(s)).into_iter().map(|p| input(p, "train"));
        let split = || input(manifest(l.split()), "split");
        let (inputs, outputs): (Vec<Input>, Vec<PathBuf>) = match self {
            Command::Simulate => (vec![], vec![manifest(l.raw())]),
            Command::Label => (vec![input(manifest(l.raw()), "simulate")], vec![manifest(l.labelled()), l.label_report()]),
            Command::Split => (vec![input(manifest(l.labelled()), "label")], vec![manifest(l.split())]),
            Command::Pretrain => (vec![split()], per_seed(&|s| l.pretrained(s))),
            Command::Train => {
                let mut i = vec![split()];
                if cfg.train.use_pretrained {
                    i.extend(pretrained());
                }
                (i, per_seed(&|s| l.forecaster(s)))
            }
            Command::Score | Command::Evaluate => {
                let mut i = vec![split()];
                i.extend(pretrained());
                i.extend(forecasters());
                let mut o = vec![l.scores()];
                o.push(if self == Command::Score { l.scores().join("maps") } else { l.reports().join("eval.json") });
                (i, o)
            }
            Command::Ablate(sweep) => {
                let mut i = vec![split()];
                if sweep != Sweep::Arch {
                    i.extend(pretrained());
                }
                (i, vec![l.ablation(sweep.name()).join("summary.json")])
            }
            Command::Plot => {
                let seed = cfg.eval.seeds[0];
                (
                    vec![
                        input(manifest(l.raw()), "simulate"),
                        split(),
                        input(l.score_csv("forecastad", seed), "evaluate"),
                        input(l.forecaster(seed), "train"),
                    ],
                    vec![l.plots()],
                )
            }
            Command::CleanDeployment => {
                (vec![split(), input(l.forecaster(cfg.eval.seeds[0]), "train")], vec![l.cleaning().join("report.json")])
            }
        };
        Step { command: self.name().to_owned(), inputs, outputs }
    }
}

/// Human-readable plan: which inputs exist, which command would produce the
/// missing ones, and what would be written.
pub fn render_plan(cmd: Command, cfg: &ExperimentConfig) -> String {
    let step = cmd.step(cfg);
    let mut out = String::new();
    let _ = writeln!(out, "plan: forecastad {}", step.command);
    let _ = writeln!(out, "  profile {}  config_hash {}  seeds {:?}", cfg.profile, cfg.hash(), cfg.eval.seeds);
    let _ = writeln!(out, "  inputs:");
    if step.inputs.is_empty() {
        let _ = writeln!(out, "    (none)");
    }
    for i in &step.inputs {
        let state = if i.path.exists() { "present".to_owned() } else { format!("missing, run `forecastad {}`", i.producer) };
        let _ = writeln!(out, "    {} [{state}]", i.path.display());
    }
    let _ = writeln!(out, "  outputs:");
    for o in &step.outputs {
        let _ = writeln!(out, "    {}", o.display());
    }
    out
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> CliResult<()> {
    match cmd {
        Command::Simulate => crate::data::simulate(cfg).map(drop),
        Command::Label => crate::data::label(cfg).map(drop),
        Command::Split => crate::data::split(cfg).map(drop),
        Command::Pretrain => crate::models::pretrain(cfg).map(drop),
        Command::Train => crate::models::train(cfg).map(drop),
        Command::Score => crate::scoring::score(cfg),
        Command::Evaluate => crate::scoring::evaluate(cfg).map(drop),
        Command::Ablate(sweep) => ablate(cfg, sweep).map(drop),
        Command::Plot => crate::plot::plot(cfg).map(drop),
        Command::CleanDeployment => crate::clean::clean(cfg).map(drop),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Profile;

    const ALL: [Command; 10] = [
        Command::Simulate,
        Command::Label,
        Command::Split,
        Command::Pretrain,
        Command::Train,
        Command::Score,
        Command::Evaluate,
        Command::Ablate(Sweep::K),
        Command::Plot,
        Command::CleanDeployment,
    ];

    /// Every input a command declares is produced by a command that runs
    /// earlier in the pipeline order, so the DAG has no cycles.
    #[test]
    fn dag_is_acyclic() {
        let cfg = ExperimentConfig::profile(Profile::Tiny);
        let order = |name: &str| ALL.iter().position(|c| c.name() == name).unwrap();
        for (i, cmd) in ALL.iter().enumerate() {
            for input in cmd.step(&cfg).inputs {
                assert!(order(input.producer) < i, "{} reads output of {}", cmd.name(), input.producer);
            }
        }
    }

    #[test]
    fn plan_names_missing_producers() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { out_dir: dir.path().to_path_buf(), ..ExperimentConfig::profile(Profile::Tiny) };
        let plan = render_plan(Command::Train, &cfg);
        assert!(plan.contains("run `forecastad split`"));
        assert!(plan.contains("run `forecastad pretrain`"));
        assert!(plan.contains("forecast.fckp"));
    }
}

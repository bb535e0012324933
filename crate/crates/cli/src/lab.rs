use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mdlm_core::decode::{
    build_schedule, eos_in_steps, first_eos_step, heatmap_accumulate, rollout_scheduled,
    DecodeConfig, DecodeMode, Heatmap, Scheduler, TrajectoryRecord,
};
use mdlm_core::predictor::{
    read_checkpoint, write_checkpoint, Checkpoint, CountingPredictor, ModelParams, Sample,
    SupervisedConfig, SupervisedRecord, SupervisedTrainer,
};
use mdlm_core::rl::{evaluate, EvalSummary, RlTrainer, RunLogRecord};
use mdlm_core::seqcore::Purpose;
use mdlm_core::tasks::{build_corpus, Corpus, DatasetRecord, TaskInstance};
use mdlm_core::{Error, RngStream, Vocab};
use serde::{Deserialize, Serialize};

use crate::config::{AblationAxis, Phase, RunConfig};
use crate::table::Table;

/// Child-seed tags of the independent random streams of a run.
mod tag {
    pub const CORPUS: u64 = 1;
    pub const PRETRAIN: u64 = 2;
    pub const SFT: u64 = 3;
    pub const RL: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const HEATMAP: u64 = 6;
    pub const INIT: u64 = 7;
    pub const EVAL_SET: u64 = 8;
    pub const RL_SET: u64 = 9;
}

#[derive(Debug, Serialize)]
struct LogHeader<'a> {
    phase: Phase,
    config_hash: &'a str,
    config: &'a RunConfig,
}

/// Result of one supervised phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSummary {
    pub steps: usize,
    pub final_loss: f64,
    /// Steps run by this invocation; fewer than `steps` after a resume.
    pub ran: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlSummary {
    pub initial: EvalSummary,
    pub last: EvalSummary,
    pub outer_steps: usize,
    /// Outer steps run by this invocation; not persisted.
    #[serde(skip)]
    pub ran: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub overall: EvalSummary,
    pub per_task: BTreeMap<String, EvalSummary>,
    pub forward_passes_per_question: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapStats {
    pub rollouts: usize,
    pub steps: usize,
    pub gen_len: usize,
    /// EOS tokens decoded during the first quarter of the steps, summed over
    /// rollouts.
    pub eos_first_quartile: usize,
    /// Mean step of the first EOS decode; rollouts without EOS count as
    /// `steps`.
    pub mean_first_eos_step: f64,
}

/// One step's artifacts: a heatmap and its summary.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapVariant {
    pub name: String,
    pub heatmap: Heatmap,
    pub stats: HeatmapStats,
}

/// Run directory plus resolved configuration.
#[derive(Debug, Clone)]
pub struct Lab {
    pub cfg: RunConfig,
    pub out: PathBuf,
    vocab: Vocab,
    hash: String,
    step_limit: Option<usize>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn append_line(file: &mut File, value: &impl Serialize) -> Result<()> {
    let mut line = serde_json::to_string(value)?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    Ok(())
}

/// Opens a run log, keeping the header and the first `keep` records.
fn open_log(path: &Path, header: &LogHeader<'_>, keep: usize) -> Result<File> {
    let mut lines = Vec::new();
    if keep > 0 {
        let f = File::open(path).with_context(|| format!("reopening {}", path.display()))?;
        for line in BufReader::new(f).lines().take(keep + 1) {
            lines.push(line?);
        }
        if lines.len() != keep + 1 {
            bail!("{} is shorter than its checkpoint", path.display());
        }
    }
    let mut f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    if keep == 0 {
        append_line(&mut f, header)?;
    } else {
        for l in &lines {
            writeln!(f, "{l}")?;
        }
    }
    drop(f);
    Ok(OpenOptions::new().append(true).open(path)?)
}

/// Reads the records of a run log, skipping the header.
pub fn read_log<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .skip(1)
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

impl Lab {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let out = out.into();
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let hash = cfg.hash();
        fs::write(out.join("config.toml"), cfg.to_toml())?;
        Ok(Self {
            cfg,
            out,
            vocab: Vocab::toy(),
            hash,
            step_limit: None,
        })
    }

    /// Stops each training phase after `n` steps of this invocation, leaving
    /// the run resumable from its last checkpoint.
    pub fn with_step_limit(mut self, n: usize) -> Self {
        self.step_limit = Some(n);
        self
    }

    fn within_limit(&self, ran: usize) -> bool {
        self.step_limit.is_none_or(|n| ran < n)
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn rng(&self, tag: u64) -> RngStream {
        RngStream::new(RngStream::new(self.cfg.seed).child_seed(tag))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn checkpoint_path(&self, phase: Phase) -> PathBuf {
        self.path(&format!("{}.ckpt", phase_name(phase)))
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Ok(build_corpus(
            &self.cfg.task,
            self.cfg.data.corpus_size,
            self.cfg.data.gen_len,
            &self.vocab,
            &self.rng(tag::CORPUS),
        )?)
    }

    fn questions(&self, tag: u64, purpose: Purpose, n: usize) -> Vec<TaskInstance> {
        let rng = self.rng(tag);
        (0..n as u64).map(|i| self.cfg.task.draw(&rng, purpose, i)).collect()
    }

    pub fn eval_questions(&self) -> Vec<TaskInstance> {
        self.questions(tag::EVAL_SET, Purpose::Eval, self.cfg.data.eval_size)
    }

    pub fn rl_questions(&self) -> Vec<TaskInstance> {
        self.questions(tag::RL_SET, Purpose::Questions, self.cfg.data.rl_questions)
    }

    fn write_dataset(&self, name: &str, instances: impl Iterator<Item = DatasetRecord>) -> Result<()> {
        let dir = self.path("data");
        fs::create_dir_all(&dir)?;
        let mut f = File::create(dir.join(name))?;
        for r in instances {
            append_line(&mut f, &r)?;
        }
        Ok(())
    }

    /// Writes the training corpus, policy-optimisation and evaluation
    /// questions as dataset files.
    pub fn write_datasets(&self) -> Result<()> {
        let corpus = self.corpus()?;
        self.write_dataset("corpus.jsonl", corpus.samples.iter().map(|s| s.instance.record()))?;
        self.write_dataset("rl.jsonl", self.rl_questions().iter().map(TaskInstance::record))?;
        self.write_dataset("eval.jsonl", self.eval_questions().iter().map(TaskInstance::record))
    }

    fn read_ckpt(&self, path: &Path) -> Result<Checkpoint> {
        let ck = read_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
        if ck.header.vocab_hash != self.vocab.hash() {
            bail!("{} was trained with a different vocabulary", path.display());
        }
        if ck.header.model != self.cfg.model {
            bail!("{} does not match the configured model", path.display());
        }
        Ok(ck)
    }

    /// Most advanced policy available: `init_checkpoint`, else the latest of
    /// rl, sft and pretrain in the run directory.
    pub fn load_policy(&self) -> Result<(ModelParams, String)> {
        if let Some(p) = &self.cfg.init_checkpoint {
            let ck = self.read_ckpt(p)?;
            return Ok((ck.params, p.display().to_string()));
        }
        for phase in [Phase::Rl, Phase::Sft, Phase::Pretrain] {
            let p = self.checkpoint_path(phase);
            if p.exists() {
                return Ok((self.read_ckpt(&p)?.params, phase_name(phase).to_string()));
            }
        }
        bail!("no checkpoint in {}; run pretrain first", self.out.display())
    }

    fn load_input(&self, phases: &[Phase]) -> Result<ModelParams> {
        if let Some(p) = &self.cfg.init_checkpoint {
            return Ok(self.read_ckpt(p)?.params);
        }
        for &phase in phases {
            let p = self.checkpoint_path(phase);
            if p.exists() {
                return Ok(self.read_ckpt(&p)?.params);
            }
        }
        bail!(
            "{} needs a {} checkpoint in {}",
            self.out.display(),
            phase_name(phases[0]),
            self.out.display()
        )
    }

    /// A checkpoint of `phase` from this exact configuration, for resuming.
    fn resumable(&self, phase: Phase) -> Result<Option<Checkpoint>> {
        let p = self.checkpoint_path(phase);
        if !p.exists() {
            return Ok(None);
        }
        let ck = self.read_ckpt(&p)?;
        let same = ck.header.phase == phase_name(phase)
            && ck.header.config_hash.as_deref() == Some(self.hash.as_str())
            && ck.optimizer.is_some();
        Ok(same.then_some(ck))
    }

    fn save(&self, phase: Phase, params: &ModelParams, opt: &mdlm_core::optim::AdamWState, step: usize) -> Result<()> {
        let ck = Checkpoint::new(params.clone(), phase_name(phase), step as u64, self.vocab.hash())
            .with_optimizer(opt.clone())
            .with_config_hash(self.hash.clone());
        write_checkpoint(&self.checkpoint_path(phase), &ck)?;
        Ok(())
    }

    fn supervised(
        &self,
        phase: Phase,
        cfg: SupervisedConfig,
        samples: &[Sample],
        init: impl FnOnce() -> Result<ModelParams>,
        rng: RngStream,
    ) -> Result<SupervisedSummary> {
        let log_path = self.path(&format!("{}_log.jsonl", phase_name(phase)));
        let mask = self.vocab.mask_id();
        let (mut trainer, done) = match self.resumable(phase)? {
            Some(ck) => {
                let step = ck.header.training_step as usize;
                let t = SupervisedTrainer::resume(cfg, samples, ck.params, ck.optimizer.unwrap(), step, rng, mask)?;
                (t, step)
            }
            None => (SupervisedTrainer::new(cfg, samples, init()?, rng, mask)?, 0),
        };
        let header = LogHeader {
            phase,
            config_hash: &self.hash,
            config: &self.cfg,
        };
        let mut log = open_log(&log_path, &header, done)?;
        let every = self.cfg.checkpoint_every;
        while trainer.step < cfg.steps && self.within_limit(trainer.step - done) {
            let rec = match trainer.step() {
                Ok(r) => r,
                Err(e) => {
                    self.save(phase, &trainer.params, &trainer.opt, trainer.step)?;
                    return Err(e.into());
                }
            };
            append_line(&mut log, &rec)?;
            if trainer.step % every == 0 || trainer.step == cfg.steps {
                self.save(phase, &trainer.params, &trainer.opt, trainer.step)?;
            }
        }
        if trainer.step < cfg.steps {
            bail!("stopped at step {} of {}; rerun to resume", trainer.step, cfg.steps);
        }
        if !self.checkpoint_path(phase).exists() {
            self.save(phase, &trainer.params, &trainer.opt, trainer.step)?;
        }
        let records: Vec<SupervisedRecord> = read_log(&log_path)?;
        Ok(SupervisedSummary {
            steps: trainer.step,
            final_loss: records.last().map_or(f64::NAN, |r| r.loss),
            ran: trainer.step - done,
        })
    }

    /// Masked diffusion pretraining on prompt-and-answer sequences, from a
    /// fresh initialisation.
    pub fn pretrain(&self) -> Result<SupervisedSummary> {
        self.write_datasets()?;
        let corpus = self.corpus()?;
        let samples: Vec<Sample> = corpus
            .samples
            .iter()
            .map(|s| Sample {
                prompt: Vec::new(),
                response: s.full(),
            })
            .collect();
        let init_seed = self.rng(tag::INIT).child_seed(Purpose::ParamInit as u64);
        let init = || match &self.cfg.init_checkpoint {
            Some(p) => Ok(self.read_ckpt(p)?.params),
            None => Ok(ModelParams::init(self.cfg.model, init_seed)?),
        };
        self.supervised(Phase::Pretrain, self.cfg.pretrain, &samples, init, self.rng(tag::PRETRAIN))
    }

    /// Prompt-conditioned fine-tuning from the pretrained checkpoint.
    pub fn sft(&self) -> Result<SupervisedSummary> {
        let corpus = self.corpus()?;
        let samples: Vec<Sample> = corpus.samples.iter().map(|s| s.as_sample()).collect();
        let init = || self.load_input(&[Phase::Pretrain]);
        self.supervised(Phase::Sft, self.cfg.sft, &samples, init, self.rng(tag::SFT))
    }

    fn evaluate_params(&self, params: &ModelParams, decode: &DecodeConfig) -> Result<EvalSummary> {
        Ok(evaluate(
            params,
            &self.eval_questions(),
            decode,
            &self.vocab,
            &self.rng(tag::EVAL),
            self.cfg.rl.lambda_fmt,
        )?)
    }

    /// Policy optimisation from the fine-tuned checkpoint.
    pub fn rl(&self) -> Result<RlSummary> {
        let questions = self.rl_questions();
        let ref_path = self.path("rl_ref.ckpt");
        let log_path = self.path("rl_log.jsonl");
        let (mut trainer, done) = match self.resumable(Phase::Rl)? {
            Some(ck) if ref_path.exists() => {
                let reference = self.read_ckpt(&ref_path)?.params;
                let step = ck.header.training_step as usize;
                let t = RlTrainer::resume(
                    self.cfg.rl,
                    &self.vocab,
                    &questions,
                    ck.params,
                    reference,
                    ck.optimizer.unwrap(),
                    step,
                    self.rng(tag::RL),
                )?;
                (t, step)
            }
            _ => {
                let init = self.load_input(&[Phase::Sft, Phase::Pretrain])?;
                let ref_ck = Checkpoint::new(init.clone(), "rl_ref", 0, self.vocab.hash())
                    .with_config_hash(self.hash.clone());
                write_checkpoint(&ref_path, &ref_ck)?;
                let t = RlTrainer::new(self.cfg.rl, &self.vocab, &questions, init, self.rng(tag::RL))?;
                (t, 0)
            }
        };
        let initial = self.evaluate_params(&trainer.reference, &self.cfg.decode)?;
        let header = LogHeader {
            phase: Phase::Rl,
            config_hash: &self.hash,
            config: &self.cfg,
        };
        let mut log = open_log(&log_path, &header, done)?;
        let every = self.cfg.checkpoint_every;
        let total = self.cfg.rl.outer_steps;
        while trainer.outer_step < total && self.within_limit(trainer.outer_step - done) {
            let rec = match trainer.step() {
                Ok(r) => r,
                Err(e) => {
                    self.save(Phase::Rl, &trainer.params, &trainer.opt, trainer.outer_step)?;
                    return Err(e.into());
                }
            };
            append_line(&mut log, &rec)?;
            if trainer.outer_step % every == 0 || trainer.outer_step == total {
                self.save(Phase::Rl, &trainer.params, &trainer.opt, trainer.outer_step)?;
            }
        }
        if trainer.outer_step < total {
            bail!(
                "stopped at outer step {} of {total}; rerun to resume",
                trainer.outer_step
            );
        }
        if !self.checkpoint_path(Phase::Rl).exists() {
            self.save(Phase::Rl, &trainer.params, &trainer.opt, trainer.outer_step)?;
        }
        let last = self.evaluate_params(&trainer.params, &self.cfg.decode)?;
        let summary = RlSummary {
            initial,
            last,
            outer_steps: trainer.outer_step,
            ran: trainer.outer_step - done,
        };
        write_json(&self.path("rl_summary.json"), &summary)?;
        Ok(summary)
    }

    /// Accuracy and reward of the current policy, overall and per task.
    pub fn eval(&self) -> Result<EvalReport> {
        let (params, checkpoint) = self.load_policy()?;
        let questions = self.eval_questions();
        let counted = CountingPredictor::new(&params);
        let rng = self.rng(tag::EVAL);
        let lambda = self.cfg.rl.lambda_fmt;
        let overall = evaluate(&counted, &questions, &self.cfg.decode, &self.vocab, &rng, lambda)?;
        let passes = counted.calls();
        let mut per_task = BTreeMap::new();
        for kind in ["countdown", "sudoku"] {
            let subset: Vec<TaskInstance> = questions
                .iter()
                .filter(|q| task_name(q) == kind)
                .cloned()
                .collect();
            if !subset.is_empty() {
                per_task.insert(
                    kind.to_string(),
                    evaluate(&params, &subset, &self.cfg.decode, &self.vocab, &rng, lambda)?,
                );
            }
        }
        let report = EvalReport {
            checkpoint,
            overall,
            per_task,
            forward_passes_per_question: passes as f64 / questions.len() as f64,
        };
        write_json(&self.path("eval.json"), &report)?;
        Ok(report)
    }

    /// Completion for a raw prompt under `cfg.decode`.
    pub fn generate(&self, prompt: &str) -> Result<String> {
        let (params, _) = self.load_policy()?;
        let tokens = self.vocab.encode(prompt)?;
        let schedule = build_schedule(&self.cfg.decode)?;
        let rec = rollout_scheduled(
            &params,
            &tokens,
            &schedule,
            self.cfg.decode.temperature,
            &self.vocab,
            &self.rng(tag::EVAL),
            0,
        )?;
        Ok(self.vocab.decode_until_eos(rec.final_state.response())?)
    }

    /// Rollouts of `params` over the evaluation prompts, cycling as needed.
    pub fn rollouts(&self, params: &ModelParams, decode: &DecodeConfig, n: usize) -> Result<Vec<TrajectoryRecord>> {
        let questions = self.eval_questions();
        let schedule = build_schedule(decode)?;
        let rng = self.rng(tag::HEATMAP);
        (0..n)
            .map(|i| {
                let prompt = self.vocab.encode(&questions[i % questions.len()].prompt_text())?;
                Ok(rollout_scheduled(params, &prompt, &schedule, decode.temperature, &self.vocab, &rng, i as u64)?)
            })
            .collect()
    }

    pub fn heatmap_variant(&self, params: &ModelParams, name: &str, decode: &DecodeConfig, n: usize) -> Result<HeatmapVariant> {
        let records = self.rollouts(params, decode, n)?;
        let eos = self.vocab.eos_id();
        let heatmap = heatmap_accumulate(&records, eos)?;
        let steps = heatmap.steps;
        let quartile = (steps / 4).max(1);
        let stats = HeatmapStats {
            rollouts: n,
            steps,
            gen_len: heatmap.gen_len,
            eos_first_quartile: records.iter().map(|r| eos_in_steps(r, eos, 0..quartile)).sum(),
            mean_first_eos_step: records
                .iter()
                .map(|r| first_eos_step(r, eos).unwrap_or(steps) as f64)
                .sum::<f64>()
                / n as f64,
        };
        Ok(HeatmapVariant {
            name: name.to_string(),
            heatmap,
            stats,
        })
    }

    /// Step-by-position EOS heatmaps without and with EOS early rejection.
    pub fn heatmap(&self) -> Result<Vec<HeatmapVariant>> {
        let (params, _) = self.load_policy()?;
        let h = &self.cfg.heatmap;
        let mut variants = vec![self.heatmap_variant(&params, "plain", &h.decode, h.rollouts)?];
        if let Some(e) = h.eoser {
            let decode = h.decode.with_eoser(e);
            variants.push(self.heatmap_variant(&params, "eoser", &decode, h.rollouts)?);
        }
        let mut summary = BTreeMap::new();
        for v in &variants {
            fs::write(self.path(&format!("heatmap_{}.csv", v.name)), v.heatmap.to_csv())?;
            summary.insert(v.name.clone(), v.stats.clone());
        }
        write_json(&self.path("heatmap_summary.json"), &summary)?;
        Ok(variants)
    }

    /// Runs the configured ablation grid and writes `ablate.csv` and
    /// `ablate.md`.
    pub fn ablate(&self) -> Result<Table> {
        let table = match &self.cfg.ablate.axis {
            AblationAxis::Steps { values } => self.ablate_steps(values)?,
            AblationAxis::Scheduler => self.ablate_scheduler()?,
            AblationAxis::DecodeMode { block_lens } => self.ablate_modes(block_lens)?,
            AblationAxis::Baseline { values } => self.ablate_baselines(values)?,
        };
        fs::write(self.path("ablate.csv"), table.to_csv())?;
        fs::write(self.path("ablate.md"), table.to_markdown())?;
        Ok(table)
    }

    fn check_cap(&self, cells: usize) -> Result<()> {
        if cells > self.cfg.ablate.cap {
            bail!(
                "invalid field `ablate.cap`: grid has {cells} cells, cap is {}",
                self.cfg.ablate.cap
            );
        }
        Ok(())
    }

    /// Accuracy in percent, `None` where the configuration is not legal.
    fn accuracy_cell(&self, params: &ModelParams, decode: DecodeConfig) -> Result<Option<f64>> {
        match build_schedule(&decode) {
            Ok(_) => Ok(Some(100.0 * self.evaluate_params(params, &decode)?.accuracy)),
            Err(Error::InvalidConfig(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn ablate_steps(&self, values: &[usize]) -> Result<Table> {
        let strategies = ["semi_ar", "full_diffusion", "full_diffusion+eoser"];
        self.check_cap(values.len() * strategies.len())?;
        let (params, _) = self.load_policy()?;
        let l = self.cfg.data.gen_len;
        let base = self.cfg.decode;
        let eoser = base.eoser.unwrap_or(mdlm_core::decode::EoserConfig::uniform_default());
        let mut table = Table::new("strategy", values.iter().map(|s| format!("S={s}")).collect());
        for name in strategies {
            let mut row = Vec::new();
            for &s in values {
                let mut d = DecodeConfig {
                    scheduler: Scheduler::Uniform,
                    steps: s,
                    eoser: None,
                    ..base
                };
                match name {
                    "semi_ar" => d.mode = DecodeMode::SemiAr { block_len: l / 2 },
                    "full_diffusion" => d.mode = DecodeMode::FullDiffusion,
                    _ => {
                        d.mode = DecodeMode::FullDiffusion;
                        d.eoser = Some(eoser);
                    }
                }
                row.push(self.accuracy_cell(&params, d)?);
            }
            table.push(name, row);
        }
        Ok(table)
    }

    fn ablate_scheduler(&self) -> Result<Table> {
        let l = self.cfg.data.gen_len;
        let base = DecodeConfig {
            mode: DecodeMode::FullDiffusion,
            ..self.cfg.decode
        };
        let log2 = (l as f64).log2() as usize;
        let rows = [
            ("uniform S=L/2", DecodeConfig { scheduler: Scheduler::Uniform, steps: l / 2, eoser: None, ..base }),
            ("uniform S=log2 L", DecodeConfig { scheduler: Scheduler::Uniform, steps: log2, eoser: None, ..base }),
            ("ass", DecodeConfig { scheduler: Scheduler::Ass, steps: log2, eoser: None, ..base }),
            (
                "ass+eoser",
                DecodeConfig {
                    scheduler: Scheduler::Ass,
                    steps: log2,
                    eoser: Some(mdlm_core::decode::EoserConfig::ass_default()),
                    ..base
                },
            ),
        ];
        self.check_cap(rows.len() * 3)?;
        let (params, _) = self.load_policy()?;
        let mut table = Table::new(
            "scheduler",
            vec!["accuracy".into(), "mean_reward".into(), "forward_passes".into()],
        );
        for (name, d) in rows {
            if build_schedule(&d).is_err() {
                table.push(name, vec![None; 3]);
                continue;
            }
            let e = self.evaluate_params(&params, &d)?;
            table.push(
                name,
                vec![Some(100.0 * e.accuracy), Some(e.mean_reward), Some(d.steps as f64)],
            );
        }
        Ok(table)
    }

    fn ablate_modes(&self, block_lens: &[usize]) -> Result<Table> {
        self.check_cap((block_lens.len() + 1) * 2)?;
        let (params, _) = self.load_policy()?;
        let mut table = Table::new("decode_mode", vec!["accuracy".into(), "mean_reward".into()]);
        let base = DecodeConfig {
            scheduler: Scheduler::Uniform,
            steps: self.cfg.data.gen_len / 2,
            ..self.cfg.decode
        };
        let mut rows: Vec<(String, DecodeConfig)> = block_lens
            .iter()
            .map(|&n| (format!("semi_ar N={n}"), DecodeConfig { mode: DecodeMode::SemiAr { block_len: n }, ..base }))
            .collect();
        rows.push(("full_diffusion".into(), DecodeConfig { mode: DecodeMode::FullDiffusion, ..base }));
        for (name, d) in rows {
            if build_schedule(&d).is_err() {
                table.push(&name, vec![None, None]);
                continue;
            }
            let e = self.evaluate_params(&params, &d)?;
            table.push(&name, vec![Some(100.0 * e.accuracy), Some(e.mean_reward)]);
        }
        Ok(table)
    }

    fn ablate_baselines(&self, values: &[mdlm_core::rl::BaselineMode]) -> Result<Table> {
        self.check_cap(values.len() * 3)?;
        let init = match &self.cfg.init_checkpoint {
            Some(p) => p.clone(),
            None => [Phase::Sft, Phase::Pretrain]
                .into_iter()
                .map(|p| self.checkpoint_path(p))
                .find(|p| p.exists())
                .ok_or_else(|| anyhow!("baseline ablation needs an sft or pretrain checkpoint"))?,
        };
        let mut table = Table::new(
            "baseline",
            vec!["initial_reward".into(), "final_reward".into(), "final_accuracy".into()],
        );
        for &mode in values {
            let name = baseline_name(mode);
            let mut cfg = self.cfg.clone();
            cfg.rl.baseline = mode;
            cfg.init_checkpoint = Some(fs::canonicalize(&init)?);
            let cell = Lab::new(cfg, self.path("ablate").join(&name))?;
            let s = cell.rl()?;
            table.push(
                &name,
                vec![Some(s.initial.mean_reward), Some(s.last.mean_reward), Some(100.0 * s.last.accuracy)],
            );
        }
        Ok(table)
    }

    pub fn run(&self, phase: Phase) -> Result<()> {
        match phase {
            Phase::Pretrain => self.pretrain().map(drop),
            Phase::Sft => self.sft().map(drop),
            Phase::Rl => self.rl().map(drop),
            Phase::Eval => self.eval().map(drop),
            Phase::Heatmap => self.heatmap().map(drop),
            Phase::Ablate => self.ablate().map(drop),
            Phase::Generate | Phase::Report => {
                bail!("{} takes extra arguments; call it directly", phase_name(phase))
            }
        }
    }
}

pub fn phase_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Pretrain => "pretrain",
        Phase::Sft => "sft",
        Phase::Rl => "rl",
        Phase::Eval => "eval",
        Phase::Generate => "generate",
        Phase::Heatmap => "heatmap",
        Phase::Ablate => "ablate",
        Phase::Report => "report",
    }
}

pub fn baseline_name(mode: mdlm_core::rl::BaselineMode) -> String {
    use mdlm_core::rl::BaselineMode;
    match mode {
        BaselineMode::Cj => "cj".into(),
        BaselineMode::IcjPromptPerturb { p_mask } => format!("icj_prompt_perturb_{p_mask}"),
        BaselineMode::IcjOneStep => "icj_one_step".into(),
    }
}

fn task_name(q: &TaskInstance) -> &'static str {
    match q {
        TaskInstance::Countdown(_) => "countdown",
        TaskInstance::Sudoku(_) => "sudoku",
    }
}

/// Records of an RL run log.
pub fn read_rl_log(dir: &Path) -> Result<Vec<RunLogRecord>> {
    read_log(&dir.join("rl_log.jsonl"))
}

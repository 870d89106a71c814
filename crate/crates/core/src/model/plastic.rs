use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::events::{Outcome, RmseSummary, TaskEvent};
use super::fit::{fit_head, fit_network, Schedule};
use super::registry::{HeadId, HeadRegistry};
use crate::data::{TaskBank, TaskData, TaskKey, VocabMap, Window};
use crate::exec::Exec;
use crate::nn::{rmse, DenseMatrix, MlpTrunk, RegressionHead, TrunkShape};
use crate::seed::{stream_rng, Stream};
use crate::similarity::{most_similar, AvgFeatureVector};
use crate::{Error, Result};

/// Minimum number of post-phase windows a task needs to be learned.
pub const MIN_POST_WINDOWS: usize = 5;

/// The pre-trained starting point for every new head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta0 {
    pub head: RegressionHead,
    /// Present only when candidates fine-tune the trunk as well.
    pub trunk: Option<MlpTrunk>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateKind {
    FromTheta0,
    FromSim,
}

#[derive(Clone, Debug)]
pub struct CandidateResult {
    pub candidate: CandidateKind,
    /// RMSE on the task's selection holdout, eval mode.
    pub eval_loss: f64,
    pub trained_head: RegressionHead,
    pub trained_trunk: Option<MlpTrunk>,
    pub sim_task: Option<TaskKey>,
    pub curve: Vec<f64>,
}

/// Both candidates for one incoming task.
#[derive(Clone, Debug)]
pub struct CandidatePair {
    pub task: TaskKey,
    pub sim_head: HeadId,
    pub from_theta0: CandidateResult,
    pub from_sim: CandidateResult,
    avg: AvgFeatureVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "head", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    NewHead(HeadId),
    Merged(HeadId),
}

impl Decision {
    pub fn head(self) -> HeadId {
        match self {
            Decision::NewHead(h) | Decision::Merged(h) => h,
        }
    }
}

/// Trunk features of windows that the frozen trunk has already seen.
#[derive(Clone, Default)]
struct FeatureCache {
    heads: HashMap<HeadId, DenseMatrix>,
    eval: HashMap<TaskKey, DenseMatrix>,
}

impl FeatureCache {
    fn clear(&mut self) {
        self.heads.clear();
        self.eval.clear();
    }
}

impl fmt::Debug for FeatureCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureCache({} heads, {} tasks)", self.heads.len(), self.eval.len())
    }
}

/// Shared trunk, pre-trained head snapshot and the growing head registry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlasticModel {
    pub config: TrainConfig,
    pub vocab: VocabMap,
    pub lag: usize,
    pub trunk: MlpTrunk,
    theta0: Theta0,
    pretrained: bool,
    pub registry: HeadRegistry,
    /// Average feature vectors in learning order.
    known: Vec<(TaskKey, AvgFeatureVector)>,
    finetune_rng: ChaCha8Rng,
    similarity_rng: ChaCha8Rng,
    pub pretrain_curve: Vec<f64>,
    #[serde(skip)]
    cache: FeatureCache,
}

impl PartialEq for PlasticModel {
    fn eq(&self, o: &Self) -> bool {
        self.config == o.config
            && self.vocab == o.vocab
            && self.lag == o.lag
            && self.trunk == o.trunk
            && self.theta0 == o.theta0
            && self.pretrained == o.pretrained
            && self.registry == o.registry
            && self.known == o.known
            && self.finetune_rng == o.finetune_rng
            && self.similarity_rng == o.similarity_rng
            && self.pretrain_curve == o.pretrain_curve
    }
}

/// Training windows (post phase minus the selection holdout) and the holdout.
pub fn selection_split(task: &TaskData, fraction: f64) -> Result<(&[Window], &[Window])> {
    let n = task.windows_post.len();
    if n < MIN_POST_WINDOWS {
        return Err(Error::InsufficientData(format!(
            "{}: {n} post-phase windows, need at least {MIN_POST_WINDOWS}",
            task.key
        )));
    }
    let holdout = ((fraction * n as f64).floor() as usize).max(1);
    Ok(task.windows_post.split_at(n - holdout))
}

fn targets(windows: &[Window]) -> Vec<f64> {
    windows.iter().map(|w| w.target).collect()
}

fn refs(windows: &[Window]) -> Vec<&Window> {
    windows.iter().collect()
}

impl PlasticModel {
    /// Freshly initialised model for tasks drawn from `vocab`.
    pub fn new(config: TrainConfig, vocab: VocabMap, lag: usize) -> Result<Self> {
        config.validate()?;
        let shape = TrunkShape {
            vendor_vocab: vocab.vendor.size(),
            product_vocab: vocab.product.size(),
            lag,
            hidden: config.hidden.clone(),
            dropout: config.dropout,
            bn_momentum: config.bn_momentum,
        };
        let mut rng = stream_rng(config.seed, Stream::Init);
        let trunk = MlpTrunk::new(shape, &mut rng, config.seed);
        let head = RegressionHead::new(trunk.output_width(), &mut rng);
        Ok(PlasticModel {
            finetune_rng: stream_rng(config.seed, Stream::FinetuneShuffle),
            similarity_rng: stream_rng(config.seed, Stream::SimilarityDraw),
            config,
            vocab,
            lag,
            trunk,
            theta0: Theta0 { head, trunk: None },
            pretrained: false,
            registry: HeadRegistry::new(),
            known: Vec::new(),
            pretrain_curve: Vec::new(),
            cache: FeatureCache::default(),
        })
    }

    pub fn for_bank(config: TrainConfig, bank: &TaskBank) -> Result<Self> {
        Self::new(config, bank.vocab.clone(), bank.lag)
    }

    pub fn is_pretrained(&self) -> bool {
        self.pretrained
    }

    pub fn theta0(&self) -> &Theta0 {
        &self.theta0
    }

    /// Learned tasks with their average feature vectors, in learning order.
    pub fn known_tasks(&self) -> &[(TaskKey, AvgFeatureVector)] {
        &self.known
    }

    pub fn is_known(&self, key: &TaskKey) -> bool {
        self.registry.owner_of(key).is_some()
    }

    fn schedule(&self, pretrain: bool) -> Schedule {
        let c = &self.config;
        if pretrain {
            Schedule {
                epochs: c.pretrain_epochs,
                batch_size: c.batch_size,
                optimizer: c.adamw(c.lr_pretrain),
                plateau: c.pretrain_plateau,
            }
        } else {
            Schedule {
                epochs: c.finetune_epochs,
                batch_size: c.batch_size,
                optimizer: c.adamw(c.lr_finetune),
                plateau: c.finetune_plateau,
            }
        }
    }

    fn trunk_trains(&self) -> bool {
        self.config.train_trunk_in_finetune
    }

    /// Trains trunk and head on the pooled pre-phase windows of every task and
    /// freezes the head as the starting point for later heads. Returns the
    /// per-epoch mean training loss.
    pub fn pretrain(&mut self, bank: &TaskBank) -> Result<Vec<f64>> {
        if self.pretrained {
            return Err(Error::State("model is already pre-trained".into()));
        }
        let windows: Vec<&Window> = bank.tasks.iter().flat_map(|t| &t.windows_pre).collect();
        if windows.is_empty() {
            return Err(Error::Data("no pre-phase windows in the bank".into()));
        }
        let y: Vec<f64> = windows.iter().map(|w| w.target).collect();
        let schedule = self.schedule(true);
        let mut rng = stream_rng(self.config.seed, Stream::PretrainShuffle);
        let mut head = self.theta0.head.clone();
        let curve = fit_network(&mut self.trunk, &mut head, &windows, &y, &schedule, &mut rng, "pretrain")?;
        self.theta0 = Theta0 {
            head,
            trunk: self.trunk_trains().then(|| self.trunk.clone()),
        };
        self.pretrained = true;
        self.pretrain_curve = curve.clone();
        self.cache.clear();
        Ok(curve)
    }

    fn require_pretrained(&self) -> Result<()> {
        if self.pretrained {
            Ok(())
        } else {
            Err(Error::State("model has not been pre-trained".into()))
        }
    }

    fn features(&self, windows: &[Window], exec: Exec) -> Result<DenseMatrix> {
        if windows.is_empty() {
            return Ok(DenseMatrix::zeros(0, self.trunk.output_width()));
        }
        self.trunk.infer_many(&refs(windows), exec)
    }

    fn head_features(&mut self, id: HeadId, exec: Exec) -> Result<DenseMatrix> {
        if let Some(f) = self.cache.heads.get(&id) {
            return Ok(f.clone());
        }
        let entry = self
            .registry
            .get(id)
            .ok_or_else(|| Error::State(format!("no head {id}")))?;
        let f = self.features(&entry.train_windows, exec)?;
        self.cache.heads.insert(id, f.clone());
        Ok(f)
    }

    /// Fine-tunes a copy of `head` (and of `trunk` when trunk training is on)
    /// and scores it on the holdout.
    #[allow(clippy::too_many_arguments)]
    fn train_candidate(
        &self,
        kind: CandidateKind,
        head: &RegressionHead,
        trunk: Option<&MlpTrunk>,
        features: Option<&DenseMatrix>,
        windows: &[&Window],
        y: &[f64],
        holdout: &[Window],
        seed: u64,
    ) -> Result<CandidateResult> {
        let stage = match kind {
            CandidateKind::FromTheta0 => "finetune(theta0)",
            CandidateKind::FromSim => "finetune(sim)",
        };
        let schedule = self.schedule(false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = head.clone();
        let hy = targets(holdout);
        let (curve, trained_trunk, pred) = match (trunk, features) {
            (Some(t), _) => {
                let mut t = t.clone();
                let curve = fit_network(&mut t, &mut head, windows, y, &schedule, &mut rng, stage)?;
                let pred = head.infer(&t.infer(&refs(holdout))?)?;
                (curve, Some(t), pred)
            }
            (None, Some(f)) => {
                let curve = fit_head(&mut head, f, y, &schedule, &mut rng, stage)?;
                let pred = head.infer(&self.trunk.infer(&refs(holdout))?)?;
                (curve, None, pred)
            }
            (None, None) => unreachable!("candidate without trunk or features"),
        };
        let eval_loss = rmse(&pred, &hy)?;
        if !eval_loss.is_finite() {
            return Err(Error::Numeric(format!("{stage} holdout loss")));
        }
        Ok(CandidateResult {
            candidate: kind,
            eval_loss,
            trained_head: head,
            trained_trunk,
            sim_task: None,
            curve,
        })
    }

    fn theta0_candidate(&mut self, task: &TaskData, exec: Exec) -> Result<CandidateResult> {
        let (train, holdout) = selection_split(task, self.config.selection_holdout_fraction)?;
        let seed = self.finetune_rng.next_u64();
        let y = targets(train);
        let features = if self.trunk_trains() {
            None
        } else {
            Some(self.features(train, exec)?)
        };
        self.train_candidate(
            CandidateKind::FromTheta0,
            &self.theta0.head,
            self.theta0.trunk.as_ref(),
            features.as_ref(),
            &refs(train),
            &y,
            holdout,
            seed,
        )
    }

    /// The very first task: a copy of the pre-trained head, fine-tuned on the
    /// task, becomes head 0.
    pub fn add_first_task(&mut self, task: &TaskData, exec: Exec) -> Result<(HeadId, CandidateResult)> {
        self.require_pretrained()?;
        if !self.registry.is_empty() {
            return Err(Error::State("registry already has heads".into()));
        }
        let cand = self.theta0_candidate(task, exec)?;
        let (train, _) = selection_split(task, self.config.selection_holdout_fraction)?;
        let id = self.register(task, train, cand.clone(), None)?;
        Ok((id, cand))
    }

    /// Trains both candidates for `task` on detached copies. Only the random
    /// streams of the model advance; trunk, heads and registry are untouched.
    pub fn train_candidates(&mut self, task: &TaskData, exec: Exec) -> Result<CandidatePair> {
        self.require_pretrained()?;
        if self.registry.is_empty() {
            return Err(Error::State("no heads yet; use add_first_task".into()));
        }
        if self.is_known(&task.key) {
            return Err(Error::State(format!("task {} is already learned", task.key)));
        }
        let (train, holdout) = selection_split(task, self.config.selection_holdout_fraction)?;
        let avg = AvgFeatureVector::from_windows(train);
        let sim = most_similar(
            &avg,
            &self.known,
            self.config.similarity,
            &mut self.similarity_rng,
            exec,
        )?
        .clone();
        let sim_head = self
            .registry
            .owner_of(&sim)
            .ok_or_else(|| Error::State(format!("similar task {sim} has no head")))?;
        let seed_a = self.finetune_rng.next_u64();
        let seed_b = self.finetune_rng.next_u64();

        let (feat_new, feat_pooled) = if self.trunk_trains() {
            (None, None)
        } else {
            let new = self.features(train, exec)?;
            let old = self.head_features(sim_head, exec)?;
            let pooled = DenseMatrix::vstack(&[old, new.clone()])?;
            (Some(new), Some(pooled))
        };
        let y_new = targets(train);
        let entry = self.registry.get(sim_head).expect("owner index is consistent");
        let mut pooled: Vec<&Window> = entry.train_windows.iter().collect();
        pooled.extend(train);
        let mut y_pooled = targets(&entry.train_windows);
        y_pooled.extend_from_slice(&y_new);
        let trunk_sim = self.trunk_trains().then_some(&self.trunk);
        let (a, b) = exec.join(
            || {
                self.train_candidate(
                    CandidateKind::FromTheta0,
                    &self.theta0.head,
                    self.theta0.trunk.as_ref(),
                    feat_new.as_ref(),
                    &refs(train),
                    &y_new,
                    holdout,
                    seed_a,
                )
            },
            || {
                self.train_candidate(
                    CandidateKind::FromSim,
                    &entry.head,
                    trunk_sim,
                    feat_pooled.as_ref(),
                    &pooled,
                    &y_pooled,
                    holdout,
                    seed_b,
                )
            },
        );
        let mut b = b?;
        b.sim_task = Some(sim.clone());
        let mut a = a?;
        a.sim_task = Some(sim);
        Ok(CandidatePair {
            task: task.key.clone(),
            sim_head,
            from_theta0: a,
            from_sim: b,
            avg,
        })
    }

    /// Keeps the candidate with the lower holdout loss; a tie goes to the
    /// similar-task head.
    pub fn assess_and_integrate(&mut self, task: &TaskData, pair: CandidatePair) -> Result<Decision> {
        if pair.task != task.key {
            return Err(Error::Argument(format!(
                "candidates were trained for {}, not {}",
                pair.task, task.key
            )));
        }
        let (train, _) = selection_split(task, self.config.selection_holdout_fraction)?;
        let CandidatePair {
            sim_head,
            from_theta0,
            from_sim,
            avg,
            ..
        } = pair;
        if from_theta0.eval_loss < from_sim.eval_loss {
            let id = self.register(task, train, from_theta0, Some(avg))?;
            Ok(Decision::NewHead(id))
        } else {
            let features = if self.trunk_trains() {
                None
            } else {
                Some(self.features(train, Exec::Sequential)?)
            };
            self.registry
                .merge(sim_head, from_sim.trained_head, task.key.clone(), train)?;
            if let Some(t) = from_sim.trained_trunk {
                self.replace_trunk(t);
            } else if let (Some(f), Some(old)) = (features, self.cache.heads.remove(&sim_head)) {
                self.cache.heads.insert(sim_head, DenseMatrix::vstack(&[old, f])?);
            }
            self.known.push((task.key.clone(), avg));
            Ok(Decision::Merged(sim_head))
        }
    }

    fn register(
        &mut self,
        task: &TaskData,
        train: &[Window],
        cand: CandidateResult,
        avg: Option<AvgFeatureVector>,
    ) -> Result<HeadId> {
        let id = self
            .registry
            .insert_new(cand.trained_head, task.key.clone(), train)?;
        if let Some(t) = cand.trained_trunk {
            self.replace_trunk(t);
        }
        let avg = avg.unwrap_or_else(|| AvgFeatureVector::from_windows(train));
        self.known.push((task.key.clone(), avg));
        Ok(id)
    }

    fn replace_trunk(&mut self, trunk: MlpTrunk) {
        self.trunk = trunk;
        self.cache.clear();
    }

    /// One step of the task loop. Returns the outcome plus the two candidate
    /// losses (only the first for the first task).
    pub fn learn_task(&mut self, task: &TaskData, exec: Exec) -> Result<Step> {
        if self.registry.is_empty() {
            let (id, cand) = self.add_first_task(task, exec)?;
            return Ok(Step {
                outcome: Outcome::First,
                head: id,
                sim_task: None,
                sim_head: None,
                loss_theta0: Some(cand.eval_loss),
                loss_sim: None,
            });
        }
        let pair = self.train_candidates(task, exec)?;
        let (la, lb) = (pair.from_theta0.eval_loss, pair.from_sim.eval_loss);
        let sim_task = pair.from_sim.sim_task.clone();
        let sim_head = pair.sim_head;
        let decision = self.assess_and_integrate(task, pair)?;
        Ok(Step {
            outcome: match decision {
                Decision::NewHead(_) => Outcome::NewHead,
                Decision::Merged(_) => Outcome::Merged,
            },
            head: decision.head(),
            sim_task,
            sim_head: Some(sim_head),
            loss_theta0: Some(la),
            loss_sim: Some(lb),
        })
    }

    /// RMSE over the task's evaluation windows, in the original units.
    pub fn task_rmse(&self, task: &TaskData, exec: Exec) -> Result<f64> {
        let head = self.registry.head_for(&task.key)?;
        let f = self.features(&task.windows_eval, exec)?;
        score(head, &f, task)
    }

    fn task_rmse_cached(&mut self, task: &TaskData, exec: Exec) -> Result<f64> {
        let f = match self.cache.eval.get(&task.key) {
            Some(f) => f.clone(),
            None => {
                let f = self.features(&task.windows_eval, exec)?;
                self.cache.eval.insert(task.key.clone(), f.clone());
                f
            }
        };
        score(self.registry.head_for(&task.key)?, &f, task)
    }

    /// Runs every task of `bank` through the learning loop in an order drawn
    /// from the run's task-order stream. Tasks without enough data are logged
    /// as skips.
    pub fn run_main_loop(&mut self, bank: &TaskBank, exec: Exec) -> Result<Vec<TaskEvent>> {
        self.require_pretrained()?;
        let order = task_order(bank.len(), self.config.seed);
        let mut events = Vec::with_capacity(bank.len());
        for (ordinal, &i) in order.iter().enumerate() {
            let task = &bank.tasks[i];
            let (step, skip) = match self.learn_task(task, exec) {
                Ok(s) => (Some(s), None),
                Err(e @ (Error::InsufficientData(_) | Error::Data(_))) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            let running = self.running_summary(bank, exec)?;
            events.push(self.event(ordinal + 1, task, step, skip, running));
        }
        Ok(events)
    }

    fn running_summary(&mut self, bank: &TaskBank, exec: Exec) -> Result<Option<RmseSummary>> {
        let keys: Vec<TaskKey> = self.known.iter().map(|(k, _)| k.clone()).collect();
        let mut scores = Vec::with_capacity(keys.len());
        for k in &keys {
            let task = bank
                .task(k)
                .ok_or_else(|| Error::Lookup(k.to_string()))?;
            scores.push(self.task_rmse_cached(task, exec)?);
        }
        Ok(RmseSummary::of(&scores))
    }

    fn event(
        &self,
        ordinal: usize,
        task: &TaskData,
        step: Option<Step>,
        skip_reason: Option<String>,
        running: Option<RmseSummary>,
    ) -> TaskEvent {
        let tph = self.registry.tasks_per_head();
        let heads = tph.len();
        let known = self.registry.task_count();
        TaskEvent {
            ordinal,
            task: task.key.clone(),
            outcome: step.as_ref().map_or(Outcome::Skipped, |s| s.outcome),
            head: step.as_ref().map(|s| s.head),
            sim_task: step.as_ref().and_then(|s| s.sim_task.clone()),
            sim_head: step.as_ref().and_then(|s| s.sim_head),
            loss_theta0: step.as_ref().and_then(|s| s.loss_theta0),
            loss_sim: step.as_ref().and_then(|s| s.loss_sim),
            head_count: heads,
            known_tasks: known,
            max_tasks_per_head: tph.iter().copied().max().unwrap_or(0),
            mean_tasks_per_head: if heads == 0 { 0.0 } else { known as f64 / heads as f64 },
            tasks_per_head: tph,
            running,
            head_digests: self.registry.digests(),
            skip_reason,
        }
    }

    /// Eval-mode forecast for a learned task.
    pub fn predict(&self, task: &TaskKey, window: &Window) -> Result<f64> {
        let head = self.registry.head_for(task)?;
        Ok(head.infer(&self.trunk.infer(&[window])?)?[0])
    }
}

/// Result of [`PlasticModel::learn_task`].
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub outcome: Outcome,
    pub head: HeadId,
    pub sim_task: Option<TaskKey>,
    pub sim_head: Option<HeadId>,
    pub loss_theta0: Option<f64>,
    pub loss_sim: Option<f64>,
}

fn score(head: &RegressionHead, features: &DenseMatrix, task: &TaskData) -> Result<f64> {
    if task.windows_eval.is_empty() {
        return Err(Error::InsufficientData(format!("{}: no evaluation windows", task.key)));
    }
    let pred = head.infer(features)?;
    let r = rmse(&pred, &targets(&task.windows_eval))?;
    let r = task.scale.map_or(r, |s| r * s.sd);
    if r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Numeric(format!("evaluation of {}", task.key)))
    }
}

/// Arrival order of `n` tasks for a master seed.
pub fn task_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::TaskOrder));
    order
}

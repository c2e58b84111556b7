use crate::error::{Error, Result};
use crate::evalkit::{ProbeKind, ProbeReport, RoundReport, StageTelemetry};
use crate::nets::{
    build_fusion_model, AuxModel, FusionClassifier, FusionLayout, Linear, MaskedFeatureExtractor, NmeFeatures,
    TrainConfig,
};
use crate::optim::Adam;
use crate::pruning::{binarize_masks, prune_stats, structural_prune, BinaryMaskSet, PruneStats};
use crate::rng::derive_rng;
use crate::stream::{examples_checksum, ClassCandidates, Dataset, ExemplarMemory, ImageShape, LabeledExample};
use crate::tensor::{normalize_in_place, Matrix};

use super::method::MethodFlags;
use super::nme::{class_mean, nearest_mean};
use super::trainer::{fit, map_chunks, StageData};

/// Where a round currently stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Built,
    Trained,
    Pruned,
    FineTuned,
}

/// An inference-time extractor subset to evaluate after each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    pub kind: ProbeKind,
    /// 1-based round of the targeted extractor.
    pub extractor: usize,
}

#[derive(Debug, Clone)]
struct RoundWork {
    new_classes: Vec<usize>,
    inputs: Matrix,
    targets: Vec<usize>,
    train_checksum: String,
    test_inputs: Matrix,
    test_targets: Vec<usize>,
    test_checksum: String,
    joint: Option<StageTelemetry>,
    prune: Option<(PruneStats, BinaryMaskSet)>,
    surgery_head_accuracy: Option<f64>,
    finetune: Option<StageTelemetry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub subset_accuracy: Vec<f64>,
    pub subset_sizes: Vec<usize>,
    pub head_accuracy: f64,
    pub head_subset_accuracy: Vec<f64>,
    /// Nearest-mean accuracy in the fused (transformed) feature space.
    pub fused_nme_accuracy: f64,
}

fn embed_in(model: &FusionClassifier, x: &Matrix, include: &[bool], space: NmeFeatures) -> Result<Matrix> {
    match space {
        NmeFeatures::Extractor => model.extractor_features_subset(x, include),
        NmeFeatures::Fused => model.embed_subset(x, include),
    }
}

/// Everything carried from one round to the next: the classifier (whose
/// extractors from finished rounds are frozen), the distillation teachers, the
/// exemplar memory and the classes seen so far.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub flags: MethodFlags,
    pub config: TrainConfig,
    pub seed: u64,
    shape: ImageShape,
    /// Seen classes in logit order.
    seen: Vec<usize>,
    /// 0-based introduction round of each entry of `seen`.
    intro: Vec<usize>,
    completed: usize,
    model: Option<FusionClassifier>,
    teachers: Vec<AuxModel>,
    memory: ExemplarMemory,
    base_param_count: Option<usize>,
    phase: Phase,
    work: Option<RoundWork>,
}

fn inputs_of<'a>(examples: impl IntoIterator<Item = &'a LabeledExample>, shape: ImageShape) -> Matrix {
    let mut data = Vec::new();
    let mut rows = 0;
    for e in examples {
        data.extend(e.to_input(shape, false));
        rows += 1;
    }
    Matrix::from_vec(rows, shape.len(), data).expect("rows of equal length")
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl SystemState {
    pub fn new(flags: MethodFlags, config: TrainConfig, memory_budget: usize, shape: ImageShape, seed: u64) -> Result<Self> {
        config.validate()?;
        flags.validate(config.fusion)?;
        if memory_budget == 0 {
            return Err(Error::config("memory budget must be positive"));
        }
        Ok(SystemState {
            flags,
            config,
            seed,
            shape,
            seen: Vec::new(),
            intro: Vec::new(),
            completed: 0,
            model: None,
            teachers: Vec::new(),
            memory: ExemplarMemory::new(memory_budget),
            base_param_count: None,
            phase: Phase::Idle,
            work: None,
        })
    }

    /// Number of finished rounds.
    pub fn round(&self) -> usize {
        self.completed
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn model(&self) -> Option<&FusionClassifier> {
        self.model.as_ref()
    }

    /// The model the next round distils from.
    pub fn teacher(&self) -> Option<&AuxModel> {
        self.teachers.last()
    }

    pub fn teachers(&self) -> &[AuxModel] {
        &self.teachers
    }

    pub fn memory(&self) -> &ExemplarMemory {
        &self.memory
    }

    pub fn seen_classes(&self) -> &[usize] {
        &self.seen
    }

    /// Parameter count of the first round's extractor before pruning.
    pub fn base_param_count(&self) -> Option<usize> {
        self.base_param_count
    }

    pub fn frozen_extractor_count(&self) -> usize {
        self.model
            .as_ref()
            .map_or(0, |m| m.branches().filter(|b| b.extractor.frozen).count())
    }

    /// Binary masks chosen in the current round, once pruning has run.
    pub fn round_masks(&self) -> Option<&BinaryMaskSet> {
        self.work.as_ref().and_then(|w| w.prune.as_ref()).map(|(_, m)| m)
    }

    fn layout(&self) -> FusionLayout {
        FusionLayout {
            transforms: self.flags.transforms,
            common_dim: self.config.common_dim,
            fusion: self.config.fusion,
            fused_head: self.flags.fusion,
            freeze_old: !self.flags.unfrozen,
            freeze_old_transforms: self.config.freeze_old_transforms,
        }
    }

    fn expect_phase(&self, want: Phase, op: &str) -> Result<()> {
        if self.phase != want {
            return Err(Error::state(format!("{op} needs phase {want:?}, state is {:?}", self.phase)));
        }
        Ok(())
    }

    fn work(&self) -> &RoundWork {
        self.work.as_ref().expect("round work exists outside Idle")
    }

    fn model_ref(&self) -> &FusionClassifier {
        self.model.as_ref().expect("model exists outside Idle")
    }

    /// Grows the classifier for `new_classes` and assembles the round's
    /// training set: exemplar memory plus all training data of the new classes.
    pub fn begin_round(&mut self, train: &Dataset, test: &Dataset, new_classes: &[usize]) -> Result<()> {
        self.expect_phase(Phase::Idle, "begin_round")?;
        if new_classes.is_empty() {
            return Err(Error::arg("a round must introduce at least one class"));
        }
        for (i, c) in new_classes.iter().enumerate() {
            if self.seen.contains(c) || new_classes[..i].contains(c) {
                return Err(Error::arg(format!("class {c} is already known")));
            }
            if *c >= train.num_classes {
                return Err(Error::arg(format!("class {c} outside the dataset")));
            }
        }
        if train.shape != self.shape || test.shape != self.shape {
            return Err(Error::arg("dataset image shape differs from the run's"));
        }
        let t = self.completed;
        let u = self.seen.len();
        let mut seen = self.seen.clone();
        seen.extend_from_slice(new_classes);
        let logit = |label: usize| seen.iter().position(|&s| s == label);

        let new_examples: Vec<&LabeledExample> =
            train.examples.iter().filter(|e| new_classes.contains(&e.label)).collect();
        if new_examples.is_empty() {
            return Err(Error::arg("no training data for the new classes"));
        }
        for c in new_classes {
            if !new_examples.iter().any(|e| e.label == *c) {
                return Err(Error::arg(format!("no training data for class {c}")));
            }
        }
        let train_checksum = examples_checksum(new_examples.iter().copied());
        let round_examples: Vec<&LabeledExample> = self.memory.iter().chain(new_examples.iter().copied()).collect();
        let inputs = inputs_of(round_examples.iter().copied(), self.shape);
        let targets: Vec<usize> = round_examples.iter().map(|e| logit(e.label).expect("seen")).collect();

        let test_examples: Vec<&LabeledExample> = test.examples.iter().filter(|e| seen.contains(&e.label)).collect();
        let test_checksum = examples_checksum(test_examples.iter().copied());
        let test_inputs = inputs_of(test_examples.iter().copied(), self.shape);
        let test_targets: Vec<usize> = test_examples.iter().map(|e| logit(e.label).expect("seen")).collect();

        let mut init = derive_rng(self.seed, "init", t as u64);
        let model = match (&self.model, self.flags.fusion) {
            (None, _) | (Some(_), true) => {
                let mut spec = self.config.extractor.clone();
                spec.masked = self.flags.masks;
                let mut ext_rng = derive_rng(self.seed, "extractor", t as u64);
                let extractor = MaskedFeatureExtractor::new(self.shape, &spec, &mut ext_rng)?;
                let (old, prev_head) = match &self.model {
                    Some(prev) => {
                        let mut old = prev.old.clone();
                        old.push(prev.current.clone());
                        (old, prev.fused_head.as_ref())
                    }
                    None => (Vec::new(), None),
                };
                build_fusion_model(old, extractor, t, &self.layout(), u, new_classes.len(), prev_head, None, &mut init)?
            }
            (Some(prev), false) => {
                let mut extractor = prev.current.extractor.clone();
                extractor.frozen = false;
                build_fusion_model(
                    Vec::new(),
                    extractor,
                    t,
                    &self.layout(),
                    u,
                    new_classes.len(),
                    None,
                    Some(&prev.aux_head),
                    &mut init,
                )?
            }
        };
        if t == 0 {
            self.base_param_count = Some(model.current.extractor.param_count());
        }
        self.model = Some(model);
        self.work = Some(RoundWork {
            new_classes: new_classes.to_vec(),
            inputs,
            targets,
            train_checksum,
            test_inputs,
            test_targets,
            test_checksum,
            joint: None,
            prune: None,
            surgery_head_accuracy: None,
            finetune: None,
        });
        self.phase = Phase::Built;
        Ok(())
    }

    fn training_teachers(&self) -> Vec<&AuxModel> {
        if self.flags.multi_teacher {
            self.teachers.iter().collect()
        } else {
            self.teachers.last().into_iter().collect()
        }
    }

    fn fit_stage(&mut self, stage: &str, max_epochs: usize) -> Result<StageTelemetry> {
        let work = self.work.take().expect("round work exists outside Idle");
        let mut model = self.model.take().expect("model exists outside Idle");
        let mut rng = derive_rng(self.seed, stage, self.completed as u64);
        let data = StageData {
            inputs: &work.inputs,
            targets: &work.targets,
            shape: self.shape,
        };
        let result = fit(&mut model, &data, &self.training_teachers(), &self.config, max_epochs, &mut rng);
        self.model = Some(model);
        self.work = Some(work);
        result
    }

    /// Joint optimisation of the fused and auxiliary classifiers (mask logits
    /// included) on the round's data. The first round has no distillation term.
    pub fn train_round_joint(&mut self) -> Result<&StageTelemetry> {
        self.expect_phase(Phase::Built, "train_round_joint")?;
        let telemetry = self.fit_stage("joint", self.config.max_epochs)?;
        let work = self.work.as_mut().expect("round work");
        work.joint = Some(telemetry);
        self.phase = Phase::Trained;
        Ok(work.joint.as_ref().expect("just set"))
    }

    /// Binarises the new extractor's masks and replaces it by its thinner
    /// version, cutting the matching inputs of its transform and heads.
    pub fn prune(&mut self) -> Result<&PruneStats> {
        self.expect_phase(Phase::Trained, "prune")?;
        let model = self.model.as_mut().expect("model");
        if !model.current.extractor.has_masks() {
            return Err(Error::state("the current extractor carries no masks"));
        }
        let masks = binarize_masks(&model.current.extractor, &self.config.prune_threshold_scales)?;
        let (pruned, kept) = structural_prune(&model.current.extractor, &masks)?;
        let stats = prune_stats(&model.current.extractor, &pruned)?;
        match &mut model.current.transform {
            Some(t) => *t = t.select_inputs(&kept)?,
            None => {
                if let Some(head) = &mut model.fused_head {
                    let offset: usize = model.old.iter().map(|b| b.feature_dim()).sum();
                    let cols: Vec<usize> = (0..offset).chain(kept.iter().map(|k| offset + k)).collect();
                    *head = head.select_inputs(&cols)?;
                }
            }
        }
        model.aux_head = model.aux_head.select_inputs(&kept)?;
        model.current.extractor = pruned;
        let head_acc = {
            let work = self.work();
            let model = self.model_ref();
            head_accuracy(model, &work.test_inputs, &work.test_targets)?
        };
        let work = self.work.as_mut().expect("round work");
        work.surgery_head_accuracy = Some(head_acc);
        work.prune = Some((stats, masks));
        self.phase = Phase::Pruned;
        Ok(&work.prune.as_ref().expect("just set").0)
    }

    /// Retrains the pruned classifier with the same objective and optimiser.
    pub fn finetune_pruned(&mut self) -> Result<&StageTelemetry> {
        if self.phase != Phase::Pruned {
            return Err(Error::state(format!(
                "fine-tuning needs a pruned extractor, state is {:?}",
                self.phase
            )));
        }
        let telemetry = self.fit_stage("finetune", self.config.finetune_max_epochs)?;
        let work = self.work.as_mut().expect("round work");
        work.finetune = Some(telemetry);
        self.phase = Phase::FineTuned;
        Ok(work.finetune.as_ref().expect("just set"))
    }

    /// Freezes the round's extractor, stores its auxiliary model as the next
    /// teacher, updates the exemplar memory and evaluates.
    pub fn finish_round(&mut self, train: &Dataset, probes: &[Probe]) -> Result<RoundReport> {
        let ready = match self.phase {
            Phase::Trained => !self.flags.masks,
            Phase::FineTuned => true,
            _ => false,
        };
        if !ready {
            return Err(Error::state(format!("finish_round called in phase {:?}", self.phase)));
        }
        let work = self.work.take().expect("round work");
        let t = self.completed;
        {
            let model = self.model.as_mut().expect("model");
            self.teachers.push(model.aux_model());
            for b in model.old.iter_mut() {
                b.extractor.freeze();
            }
            model.current.extractor.freeze();
        }
        self.seen.extend_from_slice(&work.new_classes);
        self.intro.extend(std::iter::repeat_n(t, work.new_classes.len()));

        let model = self.model.as_ref().expect("model");
        let candidates = work
            .new_classes
            .iter()
            .map(|&label| {
                let examples: Vec<LabeledExample> = train.examples.iter().filter(|e| e.label == label).cloned().collect();
                let all = vec![true; model.branch_count()];
                let feats = map_chunks(&inputs_of(&examples, self.shape), |x| {
                    embed_in(model, x, &all, self.config.nme_features)
                })?;
                let features = feats
                    .iter_rows()
                    .map(|r| {
                        let mut f = r.to_vec();
                        normalize_in_place(&mut f);
                        f
                    })
                    .collect();
                Ok(ClassCandidates {
                    label,
                    examples,
                    features,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.memory.update(candidates, self.seen.len())?;
        self.completed += 1;
        self.phase = Phase::Idle;

        let eval = self.evaluate_inputs(&work.test_inputs, &work.test_targets, None)?;
        let mut probe_reports = Vec::new();
        for p in probes {
            if p.extractor == 0 {
                return Err(Error::arg("probe extractors are numbered from 1"));
            }
            if p.extractor < self.completed {
                probe_reports.push(self.run_probe(*p, &work.test_inputs, &work.test_targets)?);
            }
        }
        let model = self.model.as_ref().expect("model");
        let param_count = model.param_count();
        let base = self.base_param_count.expect("set in the first round");
        Ok(RoundReport {
            round: self.completed,
            new_classes: work.new_classes,
            accuracy: eval.accuracy,
            subset_accuracy: eval.subset_accuracy,
            subset_sizes: eval.subset_sizes,
            head_accuracy: eval.head_accuracy,
            head_subset_accuracy: eval.head_subset_accuracy,
            fused_nme_accuracy: eval.fused_nme_accuracy,
            surgery_head_accuracy: work.surgery_head_accuracy,
            param_count,
            size_ratio: param_count as f64 / base as f64,
            prune: work.prune.map(|(s, _)| s),
            joint: work.joint.unwrap_or_default(),
            finetune: work.finetune,
            memory_size: self.memory.len(),
            train_checksum: work.train_checksum,
            test_checksum: work.test_checksum,
            probes: probe_reports,
        })
    }

    /// One full round: grow, train jointly, prune and fine-tune (when masks
    /// are on), then freeze, hand over the teacher, update memory and report.
    pub fn run_round(&mut self, train: &Dataset, test: &Dataset, new_classes: &[usize], probes: &[Probe]) -> Result<RoundReport> {
        self.begin_round(train, test, new_classes)?;
        self.train_round_joint()?;
        if self.flags.masks {
            self.prune()?;
            self.finetune_pruned()?;
        }
        self.finish_round(train, probes)
    }

    fn exemplar_features(&self, include: &[bool], space: NmeFeatures) -> Result<Vec<Matrix>> {
        let model = self.model.as_ref().ok_or_else(|| Error::state("no trained model"))?;
        self.seen
            .iter()
            .map(|&label| {
                let ex = self
                    .memory
                    .exemplars(label)
                    .filter(|e| !e.is_empty())
                    .ok_or_else(|| Error::state(format!("class {label} has no exemplars")))?;
                map_chunks(&inputs_of(ex, self.shape), |x| embed_in(model, x, include, space))
            })
            .collect()
    }

    /// Nearest-mean-of-exemplars labels for raw input rows.
    pub fn nme_predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        if self.phase != Phase::Idle {
            return Err(Error::state("prediction during an unfinished round"));
        }
        let model = self.model.as_ref().ok_or_else(|| Error::state("no trained model"))?;
        let all = vec![true; model.branch_count()];
        let space = self.config.nme_features;
        let means = self
            .exemplar_features(&all, space)?
            .iter()
            .map(class_mean)
            .collect::<Result<Vec<_>>>()?;
        let feats = map_chunks(batch, |x| embed_in(model, x, &all, space))?;
        Ok(nearest_mean(&means, &feats)?.into_iter().map(|k| self.seen[k]).collect())
    }

    /// Accuracy over the given test data (restricted to seen classes).
    pub fn evaluate(&self, test: &Dataset) -> Result<Evaluation> {
        let ex: Vec<&LabeledExample> = test.examples.iter().filter(|e| self.seen.contains(&e.label)).collect();
        let inputs = inputs_of(ex.iter().copied(), self.shape);
        let targets: Vec<usize> = ex
            .iter()
            .map(|e| self.seen.iter().position(|&s| s == e.label).expect("seen"))
            .collect();
        self.evaluate_inputs(&inputs, &targets, None)
    }

    fn evaluate_inputs(&self, inputs: &Matrix, targets: &[usize], subset: Option<(&[bool], &Linear)>) -> Result<Evaluation> {
        let model = self.model.as_ref().ok_or_else(|| Error::state("no trained model"))?;
        let all = vec![true; model.branch_count()];
        let include = subset.map_or(all.as_slice(), |(s, _)| s);
        let head = match subset {
            Some((_, h)) => h,
            None => model.fused_head.as_ref().unwrap_or(&model.aux_head),
        };
        let nme_in = |space| -> Result<(Vec<usize>, Matrix)> {
            let means = self
                .exemplar_features(include, space)?
                .iter()
                .map(class_mean)
                .collect::<Result<Vec<_>>>()?;
            let feats = map_chunks(inputs, |x| embed_in(model, x, include, space))?;
            Ok((nearest_mean(&means, &feats)?, feats))
        };
        let (fused_nme, fused) = nme_in(NmeFeatures::Fused)?;
        let nme = match self.config.nme_features {
            NmeFeatures::Fused => fused_nme.clone(),
            space => nme_in(space)?.0,
        };
        let logits = head.forward(&fused)?;
        let head_pred: Vec<usize> = logits.iter_rows().map(argmax).collect();

        let rounds = self.completed;
        let mut sizes = vec![0usize; rounds];
        let mut nme_hits = vec![0usize; rounds];
        let mut head_hits = vec![0usize; rounds];
        let mut fused_hits = 0usize;
        for (i, &y) in targets.iter().enumerate() {
            let r = self.intro[y];
            sizes[r] += 1;
            nme_hits[r] += usize::from(nme[i] == y);
            head_hits[r] += usize::from(head_pred[i] == y);
            fused_hits += usize::from(fused_nme[i] == y);
        }
        if let Some(r) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::arg(format!("no test examples for the classes of round {}", r + 1)));
        }
        let frac = |h: &[usize]| h.iter().zip(&sizes).map(|(&h, &s)| h as f64 / s as f64).collect::<Vec<_>>();
        let n = targets.len() as f64;
        Ok(Evaluation {
            accuracy: nme_hits.iter().sum::<usize>() as f64 / n,
            subset_accuracy: frac(&nme_hits),
            head_accuracy: head_hits.iter().sum::<usize>() as f64 / n,
            head_subset_accuracy: frac(&head_hits),
            fused_nme_accuracy: fused_hits as f64 / n,
            subset_sizes: sizes,
        })
    }

    /// Which branches a probe keeps.
    pub fn probe_branches(&self, probe: Probe) -> Result<Vec<bool>> {
        let model = self.model.as_ref().ok_or_else(|| Error::state("no trained model"))?;
        let n = model.branch_count();
        if probe.extractor == 0 || probe.extractor > n {
            return Err(Error::arg(format!("no extractor from round {}", probe.extractor)));
        }
        let k = probe.extractor - 1;
        let include: Vec<bool> = match probe.kind {
            ProbeKind::Drop => (0..n).map(|i| i != k).collect(),
            ProbeKind::KeepOnly => (0..n).map(|i| i == k || i == n - 1).collect(),
        };
        if !include.iter().any(|&b| b) {
            return Err(Error::arg("probe would remove every extractor"));
        }
        Ok(include)
    }

    fn run_probe(&self, probe: Probe, inputs: &Matrix, targets: &[usize]) -> Result<ProbeReport> {
        let model = self.model.as_ref().expect("model");
        if model.fused_head.is_none() {
            return Err(Error::config("extractor probes need a fused classifier"));
        }
        let include = self.probe_branches(probe)?;
        let head = self.refit_head(&include, probe)?;
        let eval = self.evaluate_inputs(inputs, targets, Some((&include, &head)))?;
        Ok(ProbeReport {
            kind: probe.kind,
            extractor: probe.extractor,
            accuracy: eval.accuracy,
            subset_accuracy: eval.subset_accuracy,
            head_accuracy: eval.head_accuracy,
            head_subset_accuracy: eval.head_subset_accuracy,
        })
    }

    /// A fresh head over the reduced feature space, trained on exemplars only.
    fn refit_head(&self, include: &[bool], probe: Probe) -> Result<Linear> {
        let feats = self.exemplar_features(include, NmeFeatures::Fused)?;
        let dim = feats[0].cols;
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (k, f) in feats.iter().enumerate() {
            rows.extend_from_slice(&f.data);
            targets.extend(std::iter::repeat_n(k, f.rows));
        }
        let x = Matrix::from_vec(targets.len(), dim, rows)?;
        let index = (self.completed * 64 + probe.extractor) as u64 * 2 + u64::from(probe.kind == ProbeKind::KeepOnly);
        let mut rng = derive_rng(self.seed, "probe", index);
        let mut head = Linear::new(dim, self.seen.len(), &mut rng);
        let mut opt = Adam::new(self.config.learning_rate);
        let mut order: Vec<usize> = (0..x.rows).collect();
        for _ in 0..self.config.probe_refit_epochs {
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            for idx in order.chunks(self.config.batch_size) {
                let xb = x.select_rows(idx);
                let tb: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
                let logits = head.forward(&xb)?;
                let (_, d) = crate::losses::cross_entropy_grad(&logits, &tb)?;
                let (g, _) = head.backward(&xb, &d, false);
                let g = g.into_flat();
                opt.step(&mut head.params_mut(), &g)?;
            }
        }
        Ok(head)
    }
}

fn head_accuracy(model: &FusionClassifier, inputs: &Matrix, targets: &[usize]) -> Result<f64> {
    let logits = map_chunks(inputs, |x| model.logits(x))?;
    let hits = logits.iter_rows().zip(targets).filter(|(r, &y)| argmax(r) == y).count();
    Ok(hits as f64 / targets.len() as f64)
}

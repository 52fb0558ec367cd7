//! Orchestration of per-domain DQN agents.
//!
//! In NDQN mode one agent per active domain owns a domain-local vocabulary and
//! action set. A domain transition model picks the agent that acts next, and a
//! stack resumes the previous domain once a subdialogue completes. In flat mode
//! a single agent over the union vocabulary and all actions plays the same
//! dialogues.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::naive_bayes::{train_naive_bayes, NaiveBayesModel};
use crate::classifiers::seed::Speaker;
use crate::classifiers::DomainClassifier;
use crate::domain::DomainId;
use crate::dqn::{AgentHyperparams, DqnAgent, Transition};
use crate::env::acts::{ActionCatalog, DialogueAct};
use crate::env::{reward, EnvConfig, RewardBreakdown, Simulator, UserGoal};
use crate::error::{Error, Result};
use crate::fixtures::Knowledge;
use crate::metrics::{EpisodeSummary, EvalSummary, MetricsRow, TrainingLog};
use crate::text::{tokenize, Compression, FeatureExtractor, StateVector, Vocabulary};

pub const NB_THRESHOLD: f64 = 1e-4;
pub const NB_SMOOTHING: f64 = 1.0;
pub const DEFAULT_MARGIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Ndqn,
    DqnFlat,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ndqn" => Ok(Self::Ndqn),
            "dqn_flat" | "flat" | "dqn" => Ok(Self::DqnFlat),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected ndqn or dqn_flat)"))),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ndqn => "ndqn",
            Self::DqnFlat => "dqn_flat",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionMode {
    RuleBased,
    Learned,
}

/// Chooses the acting domain from the latest user words.
#[derive(Clone, Debug)]
pub struct DomainTransitionModel {
    domains: Vec<DomainId>,
    predefined: Option<DomainId>,
    initial_scores: Vec<f64>,
    classifier: Option<DomainClassifier>,
    margin_threshold: f64,
}

impl DomainTransitionModel {
    /// Keyword and lexicon evidence over `domains` (registry order).
    pub fn rule_based(domains: Vec<DomainId>, predefined: Option<DomainId>) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::Config("domain transition model needs at least one domain".into()));
        }
        if let Some(p) = predefined {
            if !domains.contains(&p) {
                return Err(Error::Config(format!("start domain {} is not active", p.0)));
            }
        }
        let n = domains.len();
        Ok(Self {
            domains,
            predefined,
            initial_scores: vec![1.0 / n as f64; n],
            classifier: None,
            margin_threshold: DEFAULT_MARGIN,
        })
    }

    /// Replaces the start distribution; used when no start domain is predefined.
    pub fn with_initial_scores(mut self, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != self.domains.len() || scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("initial scores must be finite, one per domain".into()));
        }
        self.initial_scores = scores;
        Ok(self)
    }

    /// Uses `clf` whenever its margin reaches `margin`, the rules otherwise.
    pub fn with_classifier(mut self, clf: DomainClassifier, margin: f64) -> Self {
        self.classifier = Some(clf);
        self.margin_threshold = margin;
        self
    }

    pub fn mode(&self) -> TransitionMode {
        if self.classifier.is_some() {
            TransitionMode::Learned
        } else {
            TransitionMode::RuleBased
        }
    }

    pub fn domains(&self) -> &[DomainId] {
        &self.domains
    }

    pub fn predefined(&self) -> Option<DomainId> {
        self.predefined
    }

    pub fn initial_domain(&self) -> DomainId {
        if let Some(p) = self.predefined {
            return p;
        }
        let mut best = 0;
        for (i, s) in self.initial_scores.iter().enumerate() {
            if *s > self.initial_scores[best] {
                best = i;
            }
        }
        self.domains[best]
    }

    /// Domain with the most keyword and slot-value hits; `None` without evidence.
    pub fn rule_domain(&self, k: &Knowledge, words: &[String]) -> Option<DomainId> {
        let hits = k.domain_hits(words);
        let mut best: Option<(DomainId, usize)> = None;
        for &d in &self.domains {
            let h = hits.get(&d).copied().unwrap_or(0);
            if h > 0 && best.is_none_or(|(_, bh)| h > bh) {
                best = Some((d, h));
            }
        }
        best.map(|(d, _)| d)
    }

    /// Argmax of the transition scores given the current domain and evidence.
    pub fn predict(&self, k: &Knowledge, current: DomainId, words: &[String]) -> DomainId {
        if let Some(clf) = &self.classifier {
            if let Ok((d, margin)) = clf.classify_words(words) {
                if margin >= self.margin_threshold && self.domains.contains(&d) {
                    return d;
                }
            }
        }
        self.rule_domain(k, words).unwrap_or(current)
    }

    /// Applies the resume rule and the transition scores. Returns the next
    /// domain, or `None` when a completed subdialogue leaves nothing to resume.
    pub fn next_domain(
        &self,
        k: &Knowledge,
        stack: &mut DomainStack,
        current: DomainId,
        words: &[String],
        subdialogue_done: bool,
        turn: usize,
    ) -> Option<DomainId> {
        if subdialogue_done {
            return stack.pop().map(|f| f.domain);
        }
        let next = self.predict(k, current, words);
        if next != current {
            stack.push(current, turn);
        }
        Some(next)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackFrame {
    pub domain: DomainId,
    /// Turn at which the domain was suspended.
    pub turn: usize,
}

/// Suspended domains, most recent on top.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DomainStack {
    frames: Vec<StackFrame>,
    pushes: usize,
    pops: usize,
}

impl DomainStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, domain: DomainId, turn: usize) {
        self.frames.push(StackFrame { domain, turn });
        self.pushes += 1;
    }

    pub fn pop(&mut self) -> Option<StackFrame> {
        let f = self.frames.pop()?;
        self.pops += 1;
        Some(f)
    }

    pub fn top(&self) -> Option<&StackFrame> {
        self.frames.last()
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn pushes(&self) -> usize {
        self.pushes
    }

    pub fn pops(&self) -> usize {
        self.pops
    }

    pub fn frames(&self) -> &[StackFrame] {
        &self.frames
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub architecture: Architecture,
    pub compression: Compression,
    pub hyper: AgentHyperparams,
    pub nb_threshold: f64,
    pub nb_smoothing: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Ndqn,
            compression: Compression::DelexSyn,
            hyper: AgentHyperparams::default(),
            nb_threshold: NB_THRESHOLD,
            nb_smoothing: NB_SMOOTHING,
        }
    }
}

/// One agent with its word pipeline, action subset and action model.
#[derive(Clone, Debug)]
pub struct AgentView {
    /// `None` for the flat agent.
    pub domain: Option<DomainId>,
    pub extractor: FeatureExtractor,
    /// Environment catalog index of each local action.
    pub actions: Vec<usize>,
    pub nb: NaiveBayesModel,
    pub agent: DqnAgent,
}

impl AgentView {
    pub fn dim(&self) -> usize {
        self.extractor.dim()
    }

    pub fn state(&self, system_tokens: &[String], user_tokens: &[(String, f64)]) -> StateVector {
        self.extractor.state(system_tokens, user_tokens)
    }

    pub fn local_index(&self, catalog_index: usize) -> Option<usize> {
        self.actions.iter().position(|&a| a == catalog_index)
    }

    /// Local indices of the constrained actions in `env`'s current state and
    /// the posterior over all local actions.
    pub fn constrained(&self, env: &Simulator, s: &[f64], threshold: f64) -> (Vec<usize>, Vec<f64>) {
        let posterior = self.nb.posterior(s);
        let chosen = env.constrained_actions(&self.actions, &posterior, threshold);
        let local = chosen.iter().filter_map(|&a| self.local_index(a)).collect();
        (local, posterior)
    }
}

/// Per-step record of an episode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub domain: String,
    pub act: String,
    pub system_text: String,
    pub user_text: String,
    pub reward: RewardBreakdown,
    pub constrained: usize,
    /// `slot=status:value` for every slot that is not unknown after the step.
    pub belief: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub reward: f64,
    pub length: usize,
    pub success: f64,
    pub failed: bool,
    /// Stopped by the step limit before the dialogue ended.
    pub truncated: bool,
    /// Acting domain after each change, starting with the first.
    pub domains_visited: Vec<DomainId>,
    pub domain_steps: BTreeMap<DomainId, usize>,
    pub max_stack_depth: usize,
    pub final_stack_depth: usize,
    pub pushes: usize,
    pub pops: usize,
    pub trace: Vec<StepRecord>,
}

impl EpisodeResult {
    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            reward: self.reward,
            success: self.success,
            length: self.length,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOptions {
    /// Fixed exploration rate; `None` follows each agent's own schedule.
    pub epsilon: Option<f64>,
    pub learn: bool,
    pub step_limit: Option<usize>,
    pub trace: bool,
}

impl EpisodeOptions {
    pub fn training(step_limit: Option<usize>) -> Self {
        Self {
            epsilon: None,
            learn: true,
            step_limit,
            trace: false,
        }
    }

    pub fn greedy() -> Self {
        Self {
            epsilon: Some(0.0),
            learn: false,
            step_limit: None,
            trace: false,
        }
    }
}

enum Chooser<'a> {
    Agents(Option<f64>),
    Script(&'a [usize], usize),
}

struct Pending {
    state: Vec<f64>,
    action: usize,
    reward: f64,
}

/// Checkpointing and checkpoint metrics of a training run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainOptions {
    pub budget: usize,
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug)]
pub struct NdqnSystem {
    knowledge: Arc<Knowledge>,
    env_config: EnvConfig,
    catalog: ActionCatalog,
    config: SystemConfig,
    views: Vec<AgentView>,
    transition: DomainTransitionModel,
}

impl NdqnSystem {
    /// Builds the agents for `env`'s active domains (NDQN) or one agent over
    /// everything (flat). Vocabularies and action models come from the
    /// fixtures and the seed corpus.
    pub fn build(env: &Simulator, config: SystemConfig, seed: u64) -> Result<Self> {
        config.hyper.validate()?;
        if config.nb_threshold.is_nan() || config.nb_threshold < 0.0 {
            return Err(Error::Config("nb_threshold must be nonnegative".into()));
        }
        let k = env.knowledge().clone();
        let catalog = env.catalog().clone();
        let active = env.active_domains();
        let mut domain_views: Vec<(DomainId, FeatureExtractor, Vec<usize>)> = Vec::new();
        for &d in &active {
            let corpus = domain_corpus(&k, &catalog, d);
            let extractor = extractor_for(&k, &corpus, config.compression);
            domain_views.push((d, extractor, catalog.domain_actions(d)));
        }
        let mut views = Vec::new();
        match config.architecture {
            Architecture::Ndqn => {
                for (i, (d, extractor, actions)) in domain_views.into_iter().enumerate() {
                    let examples = seed_examples(&k, &catalog, &extractor, &actions, Some(d));
                    let nb = train_naive_bayes(&examples, extractor.dim(), actions.len(), config.nb_smoothing)?;
                    let agent = DqnAgent::new(extractor.dim(), actions.len(), config.hyper.clone(), agent_seed(seed, i))?;
                    views.push(AgentView {
                        domain: Some(d),
                        extractor,
                        actions,
                        nb,
                        agent,
                    });
                }
            }
            Architecture::DqnFlat => {
                let vocabs: Vec<&Vocabulary> = domain_views.iter().map(|(_, e, _)| &e.vocab).collect();
                let extractor = FeatureExtractor {
                    vocab: Vocabulary::union(&vocabs),
                    compression: config.compression,
                    lexicon: k.lexicon.clone(),
                    synonyms: k.synonyms.clone(),
                };
                let actions: Vec<usize> = (0..catalog.len()).collect();
                let examples = seed_examples(&k, &catalog, &extractor, &actions, None);
                let nb = train_naive_bayes(&examples, extractor.dim(), actions.len(), config.nb_smoothing)?;
                let agent = DqnAgent::new(extractor.dim(), actions.len(), config.hyper.clone(), agent_seed(seed, 0))?;
                views.push(AgentView {
                    domain: None,
                    extractor,
                    actions,
                    nb,
                    agent,
                });
            }
        }
        let start = env.hub().or_else(|| active.first().copied());
        let transition = DomainTransitionModel::rule_based(active, start)?;
        Ok(Self {
            knowledge: k,
            env_config: env.config().clone(),
            catalog,
            config,
            views,
            transition,
        })
    }

    pub fn knowledge(&self) -> &Arc<Knowledge> {
        &self.knowledge
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_config
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    pub fn catalog(&self) -> &ActionCatalog {
        &self.catalog
    }

    pub fn views(&self) -> &[AgentView] {
        &self.views
    }

    pub fn views_mut(&mut self) -> &mut [AgentView] {
        &mut self.views
    }

    pub fn transition_model(&self) -> &DomainTransitionModel {
        &self.transition
    }

    pub fn set_transition_model(&mut self, model: DomainTransitionModel) {
        self.transition = model;
    }

    /// A fresh simulator matching the system's environment configuration.
    pub fn make_env(&self, seed: u64) -> Result<Simulator> {
        let env = Simulator::new(self.knowledge.clone(), self.env_config.clone(), seed)?;
        if env.catalog() != &self.catalog {
            return Err(Error::Checkpoint("action catalog differs from the fixtures".into()));
        }
        Ok(env)
    }

    /// Index of the view that acts in domain `d`.
    pub fn view_index(&self, d: DomainId) -> usize {
        match self.config.architecture {
            Architecture::DqnFlat => 0,
            Architecture::Ndqn => self
                .views
                .iter()
                .position(|v| v.domain == Some(d))
                .expect("every active domain has a view"),
        }
    }

    pub fn view_for(&self, d: DomainId) -> &AgentView {
        &self.views[self.view_index(d)]
    }

    /// Largest per-agent state dimension.
    pub fn max_state_dim(&self) -> usize {
        self.views.iter().map(AgentView::dim).max().unwrap_or(0)
    }

    pub fn initial_domain(&self) -> DomainId {
        self.transition.initial_domain()
    }

    /// Resets `env` to a fresh goal and plays one dialogue.
    pub fn run_episode(&mut self, env: &mut Simulator, opts: EpisodeOptions, rng: &mut impl Rng) -> Result<EpisodeResult> {
        env.reset();
        self.play(env, Chooser::Agents(opts.epsilon), opts, rng)
    }

    /// Plays the current dialogue of `env` (already reset) with the agents.
    pub fn continue_episode(
        &mut self,
        env: &mut Simulator,
        opts: EpisodeOptions,
        rng: &mut impl Rng,
    ) -> Result<EpisodeResult> {
        self.play(env, Chooser::Agents(opts.epsilon), opts, rng)
    }

    /// Replays fixed acts for `goal`; each act must belong to the domain the
    /// transition model and stack select at that turn.
    pub fn run_scripted(
        &mut self,
        env: &mut Simulator,
        goal: UserGoal,
        acts: &[DialogueAct],
        rng: &mut impl Rng,
    ) -> Result<EpisodeResult> {
        let idx = acts
            .iter()
            .map(|a| {
                self.catalog
                    .index_of(a)
                    .ok_or_else(|| Error::Env(format!("{a} is not in the action catalog")))
            })
            .collect::<Result<Vec<_>>>()?;
        env.reset_with_goal(goal)?;
        let opts = EpisodeOptions {
            epsilon: Some(0.0),
            learn: false,
            step_limit: Some(idx.len()),
            trace: true,
        };
        self.play(env, Chooser::Script(&idx, 0), opts, rng)
    }

    fn play(
        &mut self,
        env: &mut Simulator,
        mut chooser: Chooser<'_>,
        opts: EpisodeOptions,
        rng: &mut impl Rng,
    ) -> Result<EpisodeResult> {
        let k = self.knowledge.clone();
        let flat = self.config.architecture == Architecture::DqnFlat;
        let thr = self.config.nb_threshold;
        let mut stack = DomainStack::new();
        let mut pending: Vec<Option<Pending>> = (0..self.views.len()).map(|_| None).collect();
        let mut res = EpisodeResult::default();

        let mut current = self.transition.initial_domain();
        let mut v = self.view_index(current);
        let (sys0, usr0) = (env.state().last_system_tokens.clone(), env.state().last_user_tokens.clone());
        let mut s = self.views[v].state(&sys0, &usr0).values;
        let (mut valid, mut posterior) = self.views[v].constrained(env, &s, thr);
        let mut last_domain: Option<DomainId> = None;

        loop {
            if env.state().terminal {
                break;
            }
            if opts.step_limit.is_some_and(|lim| res.length >= lim) {
                res.truncated = true;
                break;
            }
            let view = &self.views[v];
            let a = match &mut chooser {
                Chooser::Agents(eps) => {
                    let e = eps.unwrap_or_else(|| view.agent.epsilon());
                    view.agent.select_action(&s, &valid, e, rng)?
                }
                Chooser::Script(acts, pos) => {
                    let want = acts[*pos];
                    *pos += 1;
                    view.local_index(want).ok_or_else(|| {
                        Error::Env(format!(
                            "scripted act {} is not available in domain `{}`",
                            self.catalog.get(want).act,
                            k.registry.name(current)
                        ))
                    })?
                }
            };
            let act = view.actions[a];
            let acting_domain = if flat { self.catalog.get(act).domain } else { current };
            if last_domain != Some(acting_domain) {
                res.domains_visited.push(acting_domain);
                last_domain = Some(acting_domain);
            }
            *res.domain_steps.entry(acting_domain).or_insert(0) += 1;

            let dr = posterior[a].clamp(0.0, 1.0);
            let out = env.step(act)?;
            let rb = reward(out.goal_reward, dr);
            res.reward += rb.total;
            res.length += 1;
            if opts.trace {
                res.trace.push(StepRecord {
                    domain: k.registry.name(acting_domain).to_owned(),
                    act: self.catalog.get(act).act.to_string(),
                    system_text: out.system_text.clone(),
                    user_text: out.user_text.clone(),
                    reward: rb,
                    constrained: valid.len(),
                    belief: belief_labels(env),
                });
            }

            let words: Vec<String> = out.user_tokens.iter().map(|(w, _)| w.clone()).collect();
            let sys_tokens = env.state().last_system_tokens.clone();
            let sub_done = out.terminal || out.completed.is_some();
            let next = if flat || out.terminal {
                Some(current)
            } else {
                self.transition
                    .next_domain(&k, &mut stack, current, &words, out.completed.is_some(), env.state().turn)
            };
            res.max_stack_depth = res.max_stack_depth.max(stack.depth());
            let end = out.terminal || next.is_none();
            let next = next.unwrap_or(current);
            let s_next = self.views[v].state(&sys_tokens, &out.user_tokens).values;
            let learn = opts.learn;

            if !end && (flat || next == current) {
                let (nv, np) = self.views[v].constrained(env, &s_next, thr);
                if learn {
                    self.views[v].agent.record(Transition {
                        state: std::mem::take(&mut s),
                        action: a,
                        reward: rb.total,
                        next_state: s_next.clone(),
                        terminal: false,
                        next_valid: nv.clone(),
                    })?;
                }
                s = s_next;
                valid = nv;
                posterior = np;
            } else {
                if learn {
                    if sub_done || end {
                        self.views[v].agent.record(Transition {
                            state: std::mem::take(&mut s),
                            action: a,
                            reward: rb.total,
                            next_state: s_next,
                            terminal: true,
                            next_valid: Vec::new(),
                        })?;
                    } else {
                        pending[v] = Some(Pending {
                            state: std::mem::take(&mut s),
                            action: a,
                            reward: rb.total,
                        });
                    }
                }
                if !end {
                    current = next;
                    let nv_idx = self.view_index(current);
                    s = self.views[nv_idx].state(&sys_tokens, &out.user_tokens).values;
                    let (nv, np) = self.views[nv_idx].constrained(env, &s, thr);
                    if let Some(p) = pending[nv_idx].take() {
                        self.views[nv_idx].agent.record(Transition {
                            state: p.state,
                            action: p.action,
                            reward: p.reward,
                            next_state: s.clone(),
                            terminal: false,
                            next_valid: nv.clone(),
                        })?;
                    }
                    valid = nv;
                    posterior = np;
                }
            }
            if learn {
                self.views[v].agent.train_on_minibatch(rng)?;
            }
            if end {
                break;
            }
            v = self.view_index(current);
        }

        if opts.learn && !res.truncated {
            for (i, p) in pending.iter_mut().enumerate() {
                if let Some(p) = p.take() {
                    let dim = self.views[i].dim();
                    self.views[i].agent.record(Transition {
                        state: p.state,
                        action: p.action,
                        reward: p.reward,
                        next_state: vec![0.0; dim],
                        terminal: true,
                        next_valid: Vec::new(),
                    })?;
                }
            }
        }
        res.success = env.task_success();
        res.failed = env.state().failed;
        res.final_stack_depth = stack.depth();
        res.pushes = stack.pushes();
        res.pops = stack.pops();
        Ok(res)
    }

    /// Trains until `opts.budget` environment steps have been taken. A
    /// dialogue cut off by the budget is not counted. `elapsed_seconds`
    /// measures the episode loop only.
    pub fn train(&mut self, env: &mut Simulator, opts: TrainOptions, rng: &mut impl Rng) -> Result<TrainingLog> {
        if opts.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint interval must be positive".into()));
        }
        let mut log = TrainingLog::default();
        let start = Instant::now();
        let mut steps = 0;
        let mut window: Vec<EpisodeSummary> = Vec::new();
        let mut last_avgs = EvalSummary::default();
        let mut next_ckpt = opts.checkpoint_every.min(opts.budget);
        while steps < opts.budget {
            let res = self.run_episode(env, EpisodeOptions::training(Some(opts.budget - steps)), rng)?;
            steps += res.length;
            if !res.truncated {
                log.episodes.push(res.summary());
                window.push(res.summary());
            }
            while next_ckpt > 0 && steps >= next_ckpt {
                if !window.is_empty() {
                    last_avgs = EvalSummary::from_episodes(&window);
                    window.clear();
                }
                log.rows.push(MetricsRow {
                    step: next_ckpt,
                    episodes: log.episodes.len(),
                    avg_reward: last_avgs.avg_reward,
                    avg_success: last_avgs.avg_success,
                    avg_length: last_avgs.avg_length,
                    elapsed_seconds: start.elapsed().as_secs_f64(),
                });
                next_ckpt = if next_ckpt >= opts.budget {
                    0
                } else {
                    (next_ckpt + opts.checkpoint_every).min(opts.budget)
                };
            }
        }
        Ok(log)
    }

    /// Greedy evaluation without learning.
    pub fn evaluate(&mut self, env: &mut Simulator, episodes: usize, rng: &mut impl Rng) -> Result<EvalSummary> {
        let mut eps = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            eps.push(self.run_episode(env, EpisodeOptions::greedy(), rng)?.summary());
        }
        Ok(EvalSummary::from_episodes(&eps))
    }

    /// Writes the system into `dir`: `system.json` plus one agent directory per view.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let views = self
            .views
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let name = self.view_name(i);
                v.agent.save(&dir.join(format!("agent_{name}")))?;
                Ok(SavedView {
                    domain: v.domain.map(|d| self.knowledge.registry.name(d).to_owned()),
                    vocab: v.extractor.vocab.tokens().to_vec(),
                    actions: v.actions.iter().map(|&a| self.catalog.get(a).act.to_string()).collect(),
                    nb: v.nb.clone(),
                    agent_dir: format!("agent_{name}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let saved = SavedSystem {
            format: SAVE_FORMAT,
            config: self.config.clone(),
            env: self.env_config.clone(),
            start_domain: self
                .transition
                .predefined()
                .map(|d| self.knowledge.registry.name(d).to_owned()),
            views,
        };
        std::fs::write(dir.join("system.json"), serde_json::to_string_pretty(&saved)?)?;
        Ok(())
    }

    /// Restores a system saved with [`NdqnSystem::save`] against `knowledge`.
    pub fn load(dir: &Path, knowledge: Arc<Knowledge>) -> Result<Self> {
        let path = dir.join("system.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        let saved: SavedSystem = serde_json::from_str(&text)?;
        if saved.format != SAVE_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported checkpoint format {}", saved.format)));
        }
        let env = Simulator::new(knowledge.clone(), saved.env.clone(), 0)?;
        let catalog = env.catalog().clone();
        let reg = &knowledge.registry;
        let mut views = Vec::new();
        for sv in saved.views {
            let domain = sv.domain.as_deref().map(|n| reg.require(n)).transpose()?;
            let actions = sv
                .actions
                .iter()
                .map(|a| {
                    let act: DialogueAct = a.parse()?;
                    catalog
                        .index_of(&act)
                        .ok_or_else(|| Error::Checkpoint(format!("act {a} is not in the current catalog")))
                })
                .collect::<Result<Vec<_>>>()?;
            let extractor = FeatureExtractor {
                vocab: Vocabulary::from_tokens(&sv.vocab),
                compression: saved.config.compression,
                lexicon: knowledge.lexicon.clone(),
                synonyms: knowledge.synonyms.clone(),
            };
            if extractor.dim() != sv.vocab.len() {
                return Err(Error::Checkpoint("vocabulary contains duplicates".into()));
            }
            let agent = DqnAgent::load(&dir.join(&sv.agent_dir))?;
            if agent.state_dim() != extractor.dim()
                || agent.action_count() != actions.len()
                || sv.nb.n_features() != extractor.dim()
                || sv.nb.n_actions() != actions.len()
            {
                return Err(Error::Checkpoint(format!(
                    "agent in {} does not match its vocabulary or actions",
                    sv.agent_dir
                )));
            }
            views.push(AgentView {
                domain,
                extractor,
                actions,
                nb: sv.nb,
                agent,
            });
        }
        let active = env.active_domains();
        if saved.config.architecture == Architecture::Ndqn {
            for d in &active {
                if views.iter().filter(|v| v.domain == Some(*d)).count() != 1 {
                    return Err(Error::Checkpoint(format!("no unique agent for domain `{}`", reg.name(*d))));
                }
            }
        } else if views.len() != 1 {
            return Err(Error::Checkpoint("flat checkpoint must hold exactly one agent".into()));
        }
        let start = saved.start_domain.as_deref().map(|n| reg.require(n)).transpose()?;
        let transition = DomainTransitionModel::rule_based(active, start)?;
        Ok(Self {
            knowledge,
            env_config: saved.env,
            catalog,
            config: saved.config,
            views,
            transition,
        })
    }

    fn view_name(&self, i: usize) -> String {
        match self.views[i].domain {
            Some(d) => self.knowledge.registry.name(d).to_owned(),
            None => "flat".to_owned(),
        }
    }
}

const SAVE_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SavedView {
    domain: Option<String>,
    vocab: Vec<String>,
    actions: Vec<String>,
    nb: NaiveBayesModel,
    agent_dir: String,
}

#[derive(Serialize, Deserialize)]
struct SavedSystem {
    format: u32,
    config: SystemConfig,
    env: EnvConfig,
    start_domain: Option<String>,
    views: Vec<SavedView>,
}

fn belief_labels(env: &Simulator) -> Vec<String> {
    env.state()
        .slots
        .iter()
        .filter(|(_, st)| !st.is_unknown())
        .map(|(s, st)| format!("{s}={}:{}", st.label(), st.value().unwrap_or("-")))
        .collect()
}

fn agent_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64 + 1)
}

/// Replaces `$slot` tokens by every lexicon value of the slot (raw input) or
/// keeps them (compressed input).
fn expand_slots(tokens: Vec<String>, compression: Compression, k: &Knowledge, out: &mut Vec<Vec<String>>) {
    if compression == Compression::Raw {
        for t in tokens.iter().filter(|t| t.starts_with('$')) {
            let values: Vec<String> = k.lexicon.values_of(&t[1..]).into_iter().map(str::to_owned).collect();
            out.push(values);
        }
        out.push(tokens.into_iter().filter(|t| !t.starts_with('$')).collect());
    } else {
        out.push(tokens);
    }
}

/// Texts that make up the word features of domain `d`.
pub fn domain_corpus(k: &Knowledge, catalog: &ActionCatalog, d: DomainId) -> Vec<String> {
    let mut texts: Vec<String> = Vec::new();
    for &a in &catalog.domain_actions(d) {
        texts.extend(k.templates.paraphrases(&catalog.get(a).act).iter().cloned());
    }
    let user = &k.user;
    let slots = k.registry.slots(d);
    if slots.is_empty() {
        texts.extend(user.decline.iter().cloned());
        texts.extend(user.noise.iter().cloned());
        for reqs in user.request.values() {
            texts.extend(reqs.iter().cloned());
        }
    } else {
        if let Some(reqs) = user.request.get(&d) {
            texts.extend(reqs.iter().cloned());
        }
        for t in user.phrase.iter().chain(&user.answer) {
            if t.slots.iter().all(|s| slots.contains(s)) {
                texts.extend(t.texts.iter().cloned());
            }
        }
        texts.extend(user.affirm.iter().cloned());
        texts.extend(user.deny.iter().cloned());
        texts.extend(user.dontcare.iter().cloned());
    }
    let name = k.registry.name(d);
    for dlg in &k.seeds {
        let mut last_sys: Option<&crate::classifiers::SeedTurn> = None;
        let mut users: Vec<&str> = Vec::new();
        for t in &dlg.turns {
            match t.speaker {
                Speaker::User => users.push(&t.text),
                Speaker::System => {
                    if t.domain == name && t.act.is_some() {
                        if let Some(prev) = last_sys {
                            match &prev.act {
                                Some(act) if catalog.index_of(act).is_some() => {
                                    texts.extend(k.templates.paraphrases(act).iter().cloned())
                                }
                                _ => texts.push(prev.text.clone()),
                            }
                        }
                        texts.extend(users.iter().map(|u| (*u).to_owned()));
                    }
                    last_sys = Some(t);
                    users.clear();
                }
            }
        }
    }
    texts
}

fn extractor_for(k: &Knowledge, texts: &[String], compression: Compression) -> FeatureExtractor {
    let mut lists = Vec::new();
    for t in texts {
        expand_slots(tokenize(t), compression, k, &mut lists);
    }
    let vocab = Vocabulary::induce(lists.iter().map(Vec::as_slice), compression, &k.lexicon, &k.synonyms);
    FeatureExtractor {
        vocab,
        compression,
        lexicon: k.lexicon.clone(),
        synonyms: k.synonyms.clone(),
    }
}

/// Feature extractor of domain `d` built from `catalog` and the fixtures.
pub fn domain_extractor(k: &Knowledge, catalog: &ActionCatalog, d: DomainId, compression: Compression) -> FeatureExtractor {
    extractor_for(k, &domain_corpus(k, catalog, d), compression)
}

/// Raw word vocabulary over every domain; the domain classifier's input space.
pub fn global_vocabulary(k: &Knowledge, catalog: &ActionCatalog) -> Vocabulary {
    let per_domain: Vec<Vocabulary> = k
        .registry
        .ids()
        .map(|d| domain_extractor(k, catalog, d, Compression::Raw).vocab)
        .collect();
    Vocabulary::union(&per_domain.iter().collect::<Vec<_>>())
}

/// Action-model examples from the seed corpus: for each system act, the
/// state is the previous system utterance plus the user words that followed
/// it. `domain` keeps only acts of that domain.
pub fn seed_examples(
    k: &Knowledge,
    catalog: &ActionCatalog,
    extractor: &FeatureExtractor,
    actions: &[usize],
    domain: Option<DomainId>,
) -> Vec<(Vec<f64>, usize)> {
    let name = domain.map(|d| k.registry.name(d));
    let mut out = Vec::new();
    for dlg in &k.seeds {
        let mut last_sys: Vec<String> = Vec::new();
        let mut users: Vec<(String, f64)> = Vec::new();
        for t in &dlg.turns {
            match t.speaker {
                Speaker::User => users.extend(tokenize(&t.text).into_iter().map(|w| (w, 1.0))),
                Speaker::System => {
                    if let Some(act) = &t.act {
                        let in_domain = name.is_none_or(|n| n == t.domain);
                        let local = catalog
                            .index_of(act)
                            .and_then(|i| actions.iter().position(|&a| a == i));
                        if let (true, Some(l)) = (in_domain, local) {
                            out.push((extractor.state(&last_sys, &users).values, l));
                        }
                    }
                    last_sys = tokenize(&t.text);
                    users.clear();
                }
            }
        }
    }
    out
}

/// The seed demonstration with a hotel and then a restaurant request,
/// replayed as acts together with the matching user goal.
pub fn demonstration_script(k: &Knowledge) -> Result<(UserGoal, Vec<DialogueAct>)> {
    let dlg = k
        .seeds
        .first()
        .ok_or_else(|| Error::Config("seed corpus is empty".into()))?;
    let acts: Vec<DialogueAct> = dlg.turns.iter().filter_map(|t| t.act.clone()).collect();
    let reg = &k.registry;
    let mut domains: Vec<DomainId> = Vec::new();
    for name in dlg.domain_sequence() {
        let d = reg.require(name)?;
        if !domains.contains(&d) {
            domains.push(d);
        }
    }
    let mut slots = BTreeMap::new();
    let words: Vec<String> = dlg
        .turns
        .iter()
        .filter(|t| t.speaker == Speaker::User)
        .flat_map(|t| tokenize(&t.text))
        .collect();
    for w in &words {
        if let Some(slot) = k.lexicon.slot_of(w) {
            slots.entry(slot.trim_start_matches('$').to_owned()).or_insert_with(|| w.clone());
        }
    }
    Ok((UserGoal { domains, slots }, acts))
}

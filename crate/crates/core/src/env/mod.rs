//! Simulated multi-domain information-seeking dialogues.
//!
//! The simulator samples a user goal (the hub domain first, then up to two
//! info domains with slot values drawn from the lexicon), renders system acts
//! from templates, produces goal-consistent noisy user replies, and tracks
//! the system-side belief over slots.

pub mod acts;
pub mod user;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DomainId;
use crate::error::{Error, Result};
use crate::fixtures::Knowledge;
use crate::text::tokenize;

use acts::{classify, fill_placeholders, ActKind, ActionCatalog};
use user::{answer_text, pick, recognise, request_text, track, NoiseConfig, SlotStatus, TrackContext};

/// Per-step length penalty.
pub const STEP_PENALTY: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Include the slotless hub domain (greetings, topic selection, closing).
    pub include_hub: bool,
    /// Restrict the info domains (by name); `None` keeps all of them.
    pub info_domains: Option<Vec<String>>,
    /// Restrict goal slots (by name); `None` keeps every slot of a goal domain.
    pub goal_slots: Option<Vec<String>>,
    /// Relative weight of goals with 0, 1, 2, ... info domains.
    pub info_domain_count_weights: Vec<f64>,
    /// Probability that an opening request mentions each slot phrase.
    pub mention_prob: f64,
    pub noise: NoiseConfig,
    /// First template everywhere and every slot mentioned up front.
    pub deterministic_user: bool,
    pub max_turns: usize,
    /// Use the full action catalog instead of the reduced desk catalog.
    pub full_catalog: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            include_hub: true,
            info_domains: None,
            goal_slots: None,
            info_domain_count_weights: vec![0.1, 0.45, 0.45],
            mention_prob: 0.5,
            noise: NoiseConfig::default(),
            deterministic_user: false,
            max_turns: 100,
            full_catalog: false,
        }
    }
}

impl EnvConfig {
    /// One info domain, a subset of its slots, no hub.
    pub fn single_domain(domain: &str, slots: &[&str]) -> Self {
        Self {
            include_hub: false,
            info_domains: Some(vec![domain.to_owned()]),
            goal_slots: Some(slots.iter().map(|s| (*s).to_owned()).collect()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(0.0..=1.0).contains(&self.mention_prob) {
            return Err(Error::Config("mention_prob must lie in [0, 1]".into()));
        }
        if self.max_turns == 0 {
            return Err(Error::Config("max_turns must be positive".into()));
        }
        if self.info_domain_count_weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::Config("goal weights must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGoal {
    /// Hub first (when present), then info domains in the order the user raises them.
    pub domains: Vec<DomainId>,
    pub slots: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvState {
    pub goal: UserGoal,
    pub slots: BTreeMap<String, SlotStatus>,
    pub retrieved: Vec<bool>,
    pub presented: Vec<bool>,
    pub done: Vec<bool>,
    pub venues: Vec<Vec<String>>,
    pub user_declined: bool,
    pub closed: bool,
    pub terminal: bool,
    pub failed: bool,
    pub turn: usize,
    pub last_action: Option<usize>,
    /// Statement acts (greetings, introductions) already made.
    pub statements_made: Vec<usize>,
    pub last_system_text: String,
    pub last_system_tokens: Vec<String>,
    pub last_user_text: String,
    pub last_user_tokens: Vec<(String, f64)>,
}

/// What one system action produced.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub action: usize,
    pub system_text: String,
    pub user_text: String,
    pub user_tokens: Vec<(String, f64)>,
    pub terminal: bool,
    /// Info domain whose subdialogue completed on this step.
    pub completed: Option<DomainId>,
    /// Goal reward earned on this step.
    pub goal_reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub goal: f64,
    pub data: f64,
    pub length_penalty: f64,
    pub total: f64,
}

/// `goal + data - 0.1` for one step.
pub fn reward(goal: f64, data: f64) -> RewardBreakdown {
    RewardBreakdown {
        goal,
        data,
        length_penalty: STEP_PENALTY,
        total: goal + data - STEP_PENALTY,
    }
}

#[derive(Clone, Debug)]
pub struct Simulator {
    knowledge: Arc<Knowledge>,
    config: EnvConfig,
    catalog: ActionCatalog,
    kinds: Vec<ActKind>,
    hub: Option<DomainId>,
    info_domains: Vec<DomainId>,
    goal_slots: BTreeMap<DomainId, Vec<String>>,
    state: EnvState,
    rng: ChaCha8Rng,
    /// Applied system act (and its text) waiting for the user's reply.
    awaiting: Option<(usize, String)>,
    external: bool,
}

impl Simulator {
    pub fn new(knowledge: Arc<Knowledge>, config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let reg = &knowledge.registry;
        let hub = if config.include_hub { reg.hub() } else { None };
        if config.include_hub && hub.is_none() {
            return Err(Error::Config("registry has no hub domain".into()));
        }
        let info_domains: Vec<DomainId> = match &config.info_domains {
            Some(names) => names.iter().map(|n| reg.require(n)).collect::<Result<_>>()?,
            None => reg.info_domains().collect(),
        };
        if info_domains.is_empty() || info_domains.iter().any(|&d| !reg.get(d).is_info()) {
            return Err(Error::Config("at least one info domain with slots is required".into()));
        }
        let mut goal_slots = BTreeMap::new();
        for &d in &info_domains {
            let slots: Vec<String> = reg
                .slots(d)
                .iter()
                .filter(|s| config.goal_slots.as_ref().is_none_or(|g| g.contains(s)))
                .cloned()
                .collect();
            if slots.is_empty() {
                return Err(Error::Config(format!("no goal slots left for `{}`", reg.name(d))));
            }
            goal_slots.insert(d, slots);
        }
        let mut active: Vec<DomainId> = hub.into_iter().chain(info_domains.iter().copied()).collect();
        active.sort();
        let catalog = knowledge.catalog(config.full_catalog).restricted_to(&active)?;
        let kinds = catalog.entries().iter().map(|e| classify(&e.act, reg)).collect();
        let state = blank_state(&knowledge, UserGoal::default());
        let mut sim = Self {
            knowledge,
            config,
            catalog,
            kinds,
            hub,
            info_domains,
            goal_slots,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
            awaiting: None,
            external: false,
        };
        sim.reset();
        Ok(sim)
    }

    pub fn knowledge(&self) -> &Arc<Knowledge> {
        &self.knowledge
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn catalog(&self) -> &ActionCatalog {
        &self.catalog
    }

    pub fn kind(&self, action: usize) -> &ActKind {
        &self.kinds[action]
    }

    pub fn hub(&self) -> Option<DomainId> {
        self.hub
    }

    /// Domains that can appear in this environment, in registry order.
    pub fn active_domains(&self) -> Vec<DomainId> {
        let mut v: Vec<DomainId> = self.hub.into_iter().chain(self.info_domains.iter().copied()).collect();
        v.sort();
        v
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn sample_goal(&mut self) -> UserGoal {
        let n_max = self.info_domains.len();
        let min = if self.hub.is_some() { 0 } else { 1 };
        let max = if self.hub.is_some() { n_max } else { 1 };
        let weights: Vec<f64> = (min..=max)
            .map(|k| self.config.info_domain_count_weights.get(k).copied().unwrap_or(0.0))
            .collect();
        let k = if weights.iter().sum::<f64>() > 0.0 {
            let total: f64 = weights.iter().sum();
            let mut x = self.rng.gen::<f64>() * total;
            let mut pick_k = max;
            for (i, w) in weights.iter().enumerate() {
                if x < *w {
                    pick_k = min + i;
                    break;
                }
                x -= w;
            }
            pick_k
        } else {
            max
        };
        let mut order = self.info_domains.clone();
        order.shuffle(&mut self.rng);
        order.truncate(k);
        let mut slots = BTreeMap::new();
        for d in &order {
            for s in &self.goal_slots[d] {
                let values = self.knowledge.lexicon.values_of(s);
                if let Some(v) = values.choose(&mut self.rng) {
                    slots.insert(s.clone(), (*v).to_owned());
                }
            }
        }
        let domains = self.hub.into_iter().chain(order).collect();
        UserGoal { domains, slots }
    }

    pub fn reset(&mut self) -> &EnvState {
        let goal = self.sample_goal();
        self.state = blank_state(&self.knowledge, goal);
        self.external = false;
        self.awaiting = None;
        &self.state
    }

    /// Starts a dialogue with a given goal.
    pub fn reset_with_goal(&mut self, goal: UserGoal) -> Result<&EnvState> {
        for (s, v) in &goal.slots {
            if self.knowledge.lexicon.slot_of(v) != Some(&format!("${s}")) {
                return Err(Error::Config(format!("goal value `{v}` is not a lexicon value of {s}")));
            }
        }
        for d in &goal.domains {
            if Some(*d) != self.hub && !self.info_domains.contains(d) {
                return Err(Error::Config(format!(
                    "goal domain `{}` is not active",
                    self.knowledge.registry.name(*d)
                )));
            }
        }
        self.state = blank_state(&self.knowledge, goal);
        self.external = false;
        self.awaiting = None;
        Ok(&self.state)
    }

    fn domain_of_action(&self, action: usize) -> DomainId {
        self.catalog.get(action).domain
    }

    /// Whether every placeholder of the act can be filled from the belief.
    pub fn instantiable(&self, action: usize) -> bool {
        match &self.kinds[action] {
            ActKind::ExpConfirm(slots) | ActKind::ImpConfirm(slots) => {
                slots.iter().all(|s| self.state.slots.get(s).is_some_and(|st| st.value().is_some()))
            }
            _ => true,
        }
    }

    /// Requests and apologies for unknown slots, confirmations for filled
    /// slots, retrieval once no slot awaits confirmation, presentation after
    /// retrieval.
    pub fn legitimate(&self, action: usize) -> bool {
        let d = self.domain_of_action(action);
        let st = &self.state;
        let status = |s: &String| st.slots.get(s).cloned().unwrap_or(SlotStatus::Unknown);
        match &self.kinds[action] {
            ActKind::SlotQuestion(slots) => slots.iter().any(|s| status(s).is_unknown()),
            ActKind::ExpConfirm(slots) | ActKind::ImpConfirm(slots) => {
                self.instantiable(action) && slots.iter().any(|s| status(s).is_filled())
            }
            ActKind::Retrieve => {
                let ds = self.knowledge.registry.slots(d);
                !st.retrieved[d.0]
                    && ds.iter().all(|s| !status(s).is_filled())
                    && ds.iter().any(|s| status(s).is_confirmed())
            }
            ActKind::PresentInfo => st.retrieved[d.0] && !st.presented[d.0],
            _ => false,
        }
    }

    /// Whether the act can still change the dialogue state: questions and
    /// confirmations need an unresolved slot, retrieval and presentation
    /// happen once per domain, statements once per dialogue.
    pub fn applicable(&self, action: usize) -> bool {
        let d = self.domain_of_action(action);
        let st = &self.state;
        let open = |slots: &[String]| slots.iter().any(|s| st.slots.get(s).is_none_or(|x| !x.is_resolved()));
        match &self.kinds[action] {
            ActKind::SlotQuestion(slots) | ActKind::ExpConfirm(slots) | ActKind::ImpConfirm(slots) => open(slots),
            ActKind::Retrieve => !st.retrieved[d.0],
            ActKind::PresentInfo => !st.presented[d.0],
            ActKind::Statement => !st.statements_made.contains(&action),
            _ => true,
        }
    }

    /// Actions of `candidates` whose posterior exceeds `threshold`, extended
    /// with the legitimate ones and restricted to instantiable, applicable
    /// acts. Falls back to every instantiable applicable candidate, then to
    /// every instantiable one, when that leaves nothing.
    pub fn constrained_actions(&self, candidates: &[usize], posterior: &[f64], threshold: f64) -> Vec<usize> {
        let chosen: Vec<usize> = candidates
            .iter()
            .zip(posterior)
            .filter(|(&a, &p)| (p > threshold || self.legitimate(a)) && self.instantiable(a) && self.applicable(a))
            .map(|(&a, _)| a)
            .collect();
        if !chosen.is_empty() {
            return chosen;
        }
        let usable: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&a| self.instantiable(a) && self.applicable(a))
            .collect();
        if !usable.is_empty() {
            return usable;
        }
        let all: Vec<usize> = candidates.iter().copied().filter(|&a| self.instantiable(a)).collect();
        if all.is_empty() {
            candidates.to_vec()
        } else {
            all
        }
    }

    /// Share of goal achieved for one goal domain.
    pub fn domain_success(&self, d: DomainId) -> f64 {
        domain_success(&self.state, &self.knowledge, d)
    }

    pub fn task_success(&self) -> f64 {
        task_success(&self.state, &self.knowledge)
    }

    /// First goal info domain whose subdialogue is not finished.
    pub fn pending_domain(&self) -> Option<DomainId> {
        self.state
            .goal
            .domains
            .iter()
            .copied()
            .find(|&d| Some(d) != self.hub && !self.state.done[d.0])
    }

    pub fn render(&mut self, action: usize) -> String {
        let act = &self.catalog.get(action).act;
        let paras = self.knowledge.templates.paraphrases(act);
        let template = pick(paras, self.config.deterministic_user, &mut self.rng).clone();
        render_template(&template, &self.state, &self.knowledge)
    }

    /// One system act followed by the simulated user's noisy reply.
    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        self.apply_system_act(action)?;
        let kind = self.kinds[action].clone();
        let user_text = self.user_reply(&kind);
        let det = self.config.deterministic_user;
        let noise = if det { NoiseConfig::disabled() } else { self.config.noise.clone() };
        let user_tokens = recognise(
            &user_text,
            &noise,
            &self.knowledge.lexicon,
            &self.knowledge.user.noise,
            &mut self.rng,
        );
        self.observe_user(user_text, user_tokens)
    }

    /// Performs and renders a system act; the dialogue then waits for
    /// [`Simulator::observe_user`]. Returns the system text.
    pub fn apply_system_act(&mut self, action: usize) -> Result<String> {
        if self.state.terminal {
            return Err(Error::Env("dialogue already finished".into()));
        }
        if self.awaiting.is_some() {
            return Err(Error::Env("the user has not answered the previous act".into()));
        }
        if action >= self.catalog.len() {
            return Err(Error::Env(format!("unknown action {action}")));
        }
        if !self.instantiable(action) {
            return Err(Error::Env(format!(
                "{} cannot be instantiated in the current state",
                self.catalog.get(action).act
            )));
        }
        let d = self.domain_of_action(action);
        let kind = self.kinds[action].clone();
        if kind == ActKind::Retrieve {
            self.state.venues[d.0] = retrieve_venues(&self.state, &self.knowledge, d);
            self.state.retrieved[d.0] = true;
        }
        let system_text = self.render(action);
        if kind == ActKind::PresentInfo && self.state.retrieved[d.0] {
            self.state.presented[d.0] = true;
        }
        self.state.turn += 1;
        self.state.last_action = Some(action);
        if kind == ActKind::Statement && !self.state.statements_made.contains(&action) {
            self.state.statements_made.push(action);
        }
        self.state.last_system_tokens = tokenize(&system_text);
        self.state.last_system_text = system_text.clone();
        self.awaiting = Some((action, system_text.clone()));
        Ok(system_text)
    }

    /// Whether a system act is applied and waits for the user's reply.
    pub fn awaiting_user(&self) -> bool {
        self.awaiting.is_some()
    }

    /// Tracks the user's reply to the last system act and settles rewards,
    /// subdialogue completion and termination.
    pub fn observe_user(&mut self, user_text: String, user_tokens: Vec<(String, f64)>) -> Result<StepOutcome> {
        let (action, system_text) = self
            .awaiting
            .take()
            .ok_or_else(|| Error::Env("no system act awaits a reply".into()))?;
        let kind = self.kinds[action].clone();
        let ctx = track_context(&kind);
        let words: Vec<String> = user_tokens.iter().map(|(w, _)| w.clone()).collect();
        let evidence = !self.knowledge.domain_hits(&words).is_empty();
        let tracked = track(
            &mut self.state.slots,
            &ctx,
            &user_tokens,
            &self.knowledge.lexicon,
            &self.knowledge.cues,
            evidence,
        );
        if tracked.declined {
            self.state.user_declined = true;
        }
        self.state.last_user_text = user_text.clone();
        self.state.last_user_tokens = user_tokens.clone();

        let candidates: Vec<DomainId> = if self.external {
            self.info_domains.clone()
        } else {
            self.state.goal.domains.clone()
        };
        let mut completed = None;
        for gd in candidates {
            if Some(gd) != self.hub && !self.state.done[gd.0] && self.subdialogue_finished(gd) {
                self.state.done[gd.0] = true;
                completed = Some(gd);
            }
        }

        if kind == ActKind::Closing {
            self.state.closed = true;
            self.state.terminal = true;
        }
        if self.hub.is_none() && (if self.external { completed.is_some() } else { self.pending_domain().is_none() }) {
            self.state.terminal = true;
        }
        if !self.state.terminal && self.state.turn >= self.config.max_turns {
            self.state.terminal = true;
            self.state.failed = true;
        }

        let goal_reward = if self.state.failed || self.external {
            0.0
        } else if self.state.terminal {
            self.task_success()
        } else if let Some(cd) = completed {
            self.domain_success(cd)
        } else {
            0.0
        };

        Ok(StepOutcome {
            action,
            system_text,
            user_text,
            user_tokens,
            terminal: self.state.terminal,
            completed,
            goal_reward,
        })
    }

    /// Starts a dialogue with an outside user: no sampled goal, replies come
    /// through [`Simulator::observe_user`]. A subdialogue then counts as
    /// complete once its venues are presented and every slot the user filled
    /// is resolved.
    pub fn start_external(&mut self) -> &EnvState {
        self.state = blank_state(&self.knowledge, UserGoal::default());
        self.external = true;
        self.awaiting = None;
        &self.state
    }

    pub fn is_external(&self) -> bool {
        self.external
    }

    fn subdialogue_finished(&self, d: DomainId) -> bool {
        let st = &self.state;
        if self.external {
            return st.presented[d.0]
                && self.knowledge.registry.slots(d).iter().all(|s| {
                    let status = &st.slots[s];
                    status.is_unknown() || status.is_resolved()
                });
        }
        st.presented[d.0]
            && self.goal_slots[&d]
                .iter()
                .filter(|s| st.goal.slots.contains_key(*s))
                .all(|s| st.slots[s].is_resolved())
    }

    fn user_reply(&mut self, kind: &ActKind) -> String {
        let det = self.config.deterministic_user;
        let goal = self.state.goal.slots.clone();
        let user = &self.knowledge.user;
        match kind {
            ActKind::OpenQuestion => match self.pending_domain() {
                Some(d) => request_text(
                    user,
                    d,
                    &self.goal_slots[&d],
                    &goal,
                    self.config.mention_prob,
                    det,
                    &mut self.rng,
                ),
                None => pick(&user.decline, det, &mut self.rng).clone(),
            },
            ActKind::SlotQuestion(slots) => {
                if slots.iter().any(|s| goal.contains_key(s)) {
                    answer_text(user, slots, &goal, det, &mut self.rng)
                } else {
                    pick(&user.dontcare, det, &mut self.rng).clone()
                }
            }
            ActKind::ExpConfirm(slots) => {
                if self.belief_matches_goal(slots) {
                    pick(&user.affirm, det, &mut self.rng).clone()
                } else {
                    pick(&user.deny, det, &mut self.rng).clone()
                }
            }
            ActKind::ImpConfirm(slots) => {
                if self.belief_matches_goal(slots) {
                    String::new()
                } else {
                    pick(&user.deny, det, &mut self.rng).clone()
                }
            }
            _ => String::new(),
        }
    }

    fn belief_matches_goal(&self, slots: &[String]) -> bool {
        slots.iter().all(|s| match self.state.goal.slots.get(s) {
            Some(v) => self.state.slots.get(s).and_then(|st| st.value()) == Some(v.as_str()),
            None => true,
        })
    }
}

fn track_context(kind: &ActKind) -> TrackContext {
    match kind {
        ActKind::SlotQuestion(s) => TrackContext::Question(s.clone()),
        ActKind::ExpConfirm(s) => TrackContext::ExpConfirm(s.clone()),
        ActKind::ImpConfirm(s) => TrackContext::ImpConfirm(s.clone()),
        ActKind::OpenQuestion => TrackContext::Open,
        _ => TrackContext::Other,
    }
}

fn blank_state(k: &Knowledge, goal: UserGoal) -> EnvState {
    let n = k.registry.len();
    EnvState {
        goal,
        slots: k
            .registry
            .all_slots()
            .map(|(_, s)| (s.to_owned(), SlotStatus::Unknown))
            .collect(),
        retrieved: vec![false; n],
        presented: vec![false; n],
        done: vec![false; n],
        venues: vec![Vec::new(); n],
        user_declined: false,
        closed: false,
        terminal: false,
        failed: false,
        turn: 0,
        last_action: None,
        statements_made: Vec::new(),
        last_system_text: String::new(),
        last_system_tokens: Vec::new(),
        last_user_text: String::new(),
        last_user_tokens: Vec::new(),
    }
}

/// Fills `$slot` from the belief and `_domain` with retrieved venue names.
pub fn render_template(template: &str, state: &EnvState, k: &Knowledge) -> String {
    fill_placeholders(template, |key| {
        if let Some(slot) = key.strip_prefix('$') {
            state.slots.get(slot).and_then(|st| st.value()).map(str::to_owned)
        } else {
            let d = k.registry.id(key.strip_prefix('_')?)?;
            let names = &state.venues[d.0];
            Some(if names.is_empty() {
                "none".to_owned()
            } else {
                names.join(" and ")
            })
        }
    })
}

/// Up to three venues of `d` consistent with the believed slot values.
pub fn retrieve_venues(state: &EnvState, k: &Knowledge, d: DomainId) -> Vec<String> {
    k.venues
        .iter()
        .filter(|v| v.domain == d)
        .filter(|v| {
            v.constraints.iter().all(|(slot, want)| {
                state
                    .slots
                    .get(slot)
                    .and_then(|st| st.value())
                    .is_none_or(|have| have == want)
            })
        })
        .take(3)
        .map(|v| v.name.clone())
        .collect()
}

/// Confirmed correct goal slots plus presentation, over goal slots plus one.
/// The hub counts as achieved when the dialogue closed after the user
/// declined further help.
pub fn domain_success(state: &EnvState, k: &Knowledge, d: DomainId) -> f64 {
    let slots = k.registry.slots(d);
    if slots.is_empty() {
        return if state.closed && state.user_declined { 1.0 } else { 0.0 };
    }
    let goal: Vec<&String> = slots.iter().filter(|s| state.goal.slots.contains_key(*s)).collect();
    let confirmed = goal
        .iter()
        .filter(|s| match &state.slots[**s] {
            SlotStatus::Confirmed { value } => Some(value) == state.goal.slots.get(**s),
            _ => false,
        })
        .count();
    let presented = usize::from(state.presented[d.0]);
    (confirmed + presented) as f64 / (goal.len() + 1) as f64
}

/// Mean of [`domain_success`] over the goal domains.
pub fn task_success(state: &EnvState, k: &Knowledge) -> f64 {
    if state.goal.domains.is_empty() {
        return 0.0;
    }
    let total: f64 = state.goal.domains.iter().map(|&d| domain_success(state, k, d)).sum();
    total / state.goal.domains.len() as f64
}

//! Live conversations between people and a trained system.
//!
//! Each session owns a simulator in external mode that tracks the belief and
//! renders acts, while the loaded system picks greedy acts among the
//! constrained ones. Loaded systems are shared read-only between sessions.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{Architecture, DomainStack, NdqnSystem};
use crate::domain::DomainId;
use crate::env::acts::{ActKind, ActType};
use crate::env::user::recognise;
use crate::env::{Simulator, StepOutcome};
use crate::error::{Error, Result};
use crate::fixtures::Knowledge;
use crate::harness::checkpoint_path;
use crate::text::tokenize;

/// Upper bound on acts chained into one system turn.
pub const MAX_ACTS_PER_TURN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotView {
    pub status: String,
    pub value: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActRecord {
    pub act: String,
    pub domain: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    /// System acts of the turn, in order; empty for user turns.
    pub acts: Vec<ActRecord>,
    /// Domain in control after the turn.
    pub domain: String,
    /// Slots that are no longer unknown.
    pub slots: BTreeMap<String, SlotView>,
    pub terminal: bool,
}

/// Answer to a user turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnReply {
    pub session_id: String,
    pub turn: TurnRecord,
    /// The text was empty and the last prompt is repeated.
    pub repeated: bool,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOpened {
    pub session_id: String,
    pub checkpoint: String,
    pub turn: TurnRecord,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOptions {
    /// Pass typed text through the simulator's recognition noise.
    pub noisy: bool,
    pub seed: u64,
}

pub struct Session {
    id: String,
    checkpoint: String,
    system: Arc<NdqnSystem>,
    env: Simulator,
    current: DomainId,
    stack: DomainStack,
    transcript: Vec<TurnRecord>,
    options: SessionOptions,
    rng: ChaCha8Rng,
    /// The last user turn matched no vocabulary word of the active agent.
    unrecognised: bool,
}

impl Session {
    /// Opens a dialogue and produces the opening system turn.
    pub fn open(id: String, checkpoint: String, system: Arc<NdqnSystem>, options: SessionOptions) -> Result<Self> {
        let mut env = system.make_env(options.seed)?;
        env.start_external();
        let current = system.initial_domain();
        let mut s = Self {
            id,
            checkpoint,
            system,
            env,
            current,
            stack: DomainStack::new(),
            transcript: Vec::new(),
            options,
            rng: ChaCha8Rng::seed_from_u64(options.seed),
            unrecognised: false,
        };
        s.system_turn()?;
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn checkpoint(&self) -> &str {
        &self.checkpoint
    }

    pub fn transcript(&self) -> &[TurnRecord] {
        &self.transcript
    }

    pub fn is_complete(&self) -> bool {
        self.env.state().terminal
    }

    pub fn active_domain(&self) -> &str {
        self.system.knowledge().registry.name(self.current)
    }

    pub fn user_turn(&mut self, text: &str) -> Result<TurnReply> {
        if self.is_complete() {
            return Err(Error::SessionComplete(self.id.clone()));
        }
        if text.trim().is_empty() {
            let last = self
                .transcript
                .iter()
                .rev()
                .find(|t| t.speaker == Speaker::System)
                .cloned()
                .ok_or_else(|| Error::Env("session has no system turn".into()))?;
            return Ok(self.reply(last, true));
        }
        let tokens: Vec<(String, f64)> = if self.options.noisy {
            let k = self.system.knowledge().clone();
            let noise = self.env.config().noise.clone();
            recognise(text, &noise, &k.lexicon, &k.user.noise, &mut self.rng)
        } else {
            tokenize(text).into_iter().map(|w| (w, 1.0)).collect()
        };
        let out = self.env.observe_user(text.to_owned(), tokens)?;
        self.after_reply(&out);
        self.push_turn(Speaker::User, text.to_owned(), Vec::new());
        let turn = self.system_turn()?;
        Ok(self.reply(turn, false))
    }

    fn reply(&self, turn: TurnRecord, repeated: bool) -> TurnReply {
        TurnReply {
            session_id: self.id.clone(),
            turn,
            repeated,
            complete: self.is_complete(),
        }
    }

    /// Domain transitions after a user reply, as during training.
    fn after_reply(&mut self, out: &StepOutcome) {
        let sys = &self.system;
        let words: Vec<String> = out.user_tokens.iter().map(|(w, _)| w.clone()).collect();
        if sys.architecture() == Architecture::Ndqn && !out.terminal {
            let next = sys.transition_model().next_domain(
                sys.knowledge(),
                &mut self.stack,
                self.current,
                &words,
                out.completed.is_some(),
                self.env.state().turn,
            );
            if let Some(d) = next {
                self.current = d;
            }
        }
        let view = sys.view_for(self.current);
        self.unrecognised = !out.user_text.trim().is_empty()
            && view.extractor.state(&[], &out.user_tokens).values.iter().all(|v| *v == 0.0);
    }

    /// Chains system acts until one expects an answer, the dialogue closes or
    /// [`MAX_ACTS_PER_TURN`] is reached.
    fn system_turn(&mut self) -> Result<TurnRecord> {
        let mut acts = Vec::new();
        while !self.env.state().terminal {
            let (action, domain, text) = self.act()?;
            acts.push(ActRecord {
                act: self.system.catalog().get(action).act.to_string(),
                domain,
                text,
            });
            match self.env.kind(action) {
                ActKind::Closing => {
                    let out = self.env.observe_user(String::new(), Vec::new())?;
                    self.after_reply(&out);
                    break;
                }
                kind if kind.expects_reply() => break,
                _ if acts.len() >= MAX_ACTS_PER_TURN => break,
                _ => {
                    let out = self.env.observe_user(String::new(), Vec::new())?;
                    self.after_reply(&out);
                }
            }
        }
        let text = acts.iter().map(|a| a.text.as_str()).collect::<Vec<_>>().join(" ");
        Ok(self.push_turn(Speaker::System, text, acts))
    }

    /// Greedy act of the agent in control among the constrained acts.
    fn act(&mut self) -> Result<(usize, String, String)> {
        let sys = self.system.clone();
        let view = sys.view_for(self.current);
        let st = self.env.state();
        let s = view.state(&st.last_system_tokens, &st.last_user_tokens).values;
        let (mut valid, _) = view.constrained(&self.env, &s, sys.config().nb_threshold);
        if self.unrecognised {
            let clarify: Vec<usize> = valid
                .iter()
                .copied()
                .filter(|&a| {
                    matches!(
                        sys.catalog().get(view.actions[a]).act.act_type,
                        ActType::Request | ActType::Apology
                    )
                })
                .collect();
            if !clarify.is_empty() {
                valid = clarify;
            }
            self.unrecognised = false;
        }
        let a = view.agent.select_action(&s, &valid, 0.0, &mut self.rng)?;
        let action = view.actions[a];
        let domain = match view.domain {
            Some(d) => d,
            None => sys.catalog().get(action).domain,
        };
        let text = self.env.apply_system_act(action)?;
        Ok((action, sys.knowledge().registry.name(domain).to_owned(), text))
    }

    fn push_turn(&mut self, speaker: Speaker, text: String, acts: Vec<ActRecord>) -> TurnRecord {
        let domain = acts
            .last()
            .map(|a| a.domain.clone())
            .unwrap_or_else(|| self.active_domain().to_owned());
        let slots = self
            .env
            .state()
            .slots
            .iter()
            .filter(|(_, st)| !st.is_unknown())
            .map(|(s, st)| {
                (
                    s.clone(),
                    SlotView {
                        status: st.label().to_owned(),
                        value: st.value().map(str::to_owned),
                    },
                )
            })
            .collect();
        let turn = TurnRecord {
            index: self.transcript.len(),
            speaker,
            text,
            acts,
            domain,
            slots,
            terminal: self.env.state().terminal,
        };
        self.transcript.push(turn.clone());
        turn
    }
}

/// Checkpoints and live sessions. Loaded systems are immutable and shared;
/// each session sits behind its own lock so turns of one session are serialised.
pub struct SessionManager {
    knowledge: Arc<Knowledge>,
    root: Option<PathBuf>,
    systems: Mutex<HashMap<String, Arc<NdqnSystem>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    options: SessionOptions,
}

impl SessionManager {
    /// Serves checkpoints found under `root`: every subdirectory holding a
    /// saved system, directly or in its `checkpoint` directory.
    pub fn new(knowledge: Arc<Knowledge>, root: Option<PathBuf>) -> Self {
        Self {
            knowledge,
            root,
            systems: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            options: SessionOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SessionOptions) -> Self {
        self.options = options;
        self
    }

    /// Makes an in-memory system available under `id`.
    pub fn register(&self, id: &str, system: NdqnSystem) {
        lock(&self.systems).insert(id.to_owned(), Arc::new(system));
    }

    pub fn checkpoints(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = lock(&self.systems).keys().cloned().collect();
        if let Some(root) = &self.root {
            if root.is_dir() {
                for entry in std::fs::read_dir(root)? {
                    let path = entry?.path();
                    if path.is_dir() && is_checkpoint(&path) {
                        if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                            ids.push(name.to_owned());
                        }
                    }
                }
            }
        }
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    fn system(&self, id: &str) -> Result<Arc<NdqnSystem>> {
        if let Some(s) = lock(&self.systems).get(id) {
            return Ok(s.clone());
        }
        let not_found = || Error::NotFound(format!("checkpoint `{id}`"));
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(not_found());
        }
        let root = self.root.as_ref().ok_or_else(not_found)?;
        let dir = root.join(id);
        if !is_checkpoint(&dir) {
            return Err(not_found());
        }
        let system = Arc::new(NdqnSystem::load(&checkpoint_path(&dir), self.knowledge.clone())?);
        Ok(lock(&self.systems).entry(id.to_owned()).or_insert(system).clone())
    }

    pub fn create_session(&self, checkpoint: &str) -> Result<SessionOpened> {
        let system = self.system(checkpoint)?;
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let id = format!("s{n}");
        let options = SessionOptions {
            seed: self.options.seed.wrapping_add(n),
            ..self.options
        };
        let session = Session::open(id.clone(), checkpoint.to_owned(), system, options)?;
        let turn = session.transcript()[0].clone();
        lock(&self.sessions).insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(SessionOpened {
            session_id: id,
            checkpoint: checkpoint.to_owned(),
            turn,
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session `{id}`")))
    }

    pub fn post_user_turn(&self, id: &str, text: &str) -> Result<TurnReply> {
        let session = self.session(id)?;
        let mut guard = lock(&session);
        guard.user_turn(text)
    }

    pub fn transcript(&self, id: &str) -> Result<Vec<TurnRecord>> {
        let session = self.session(id)?;
        let guard = lock(&session);
        Ok(guard.transcript().to_vec())
    }

    pub fn session_count(&self) -> usize {
        lock(&self.sessions).len()
    }
}

fn is_checkpoint(dir: &Path) -> bool {
    checkpoint_path(dir).join("system.json").is_file()
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

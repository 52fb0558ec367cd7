//! Simulated user: reply templates, recognition noise and the belief tracker
//! that turns (noisy) user words into slot updates.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainId, DomainRegistry};
use crate::error::{Error, Result};
use crate::fixtures::Cues;
use crate::text::{content_lines, split_pair, tokenize, SlotLexicon};

/// A template keyed by the slots it mentions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotTemplate {
    pub slots: Vec<String>,
    pub texts: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UserTemplates {
    pub request: BTreeMap<DomainId, Vec<String>>,
    pub phrase: Vec<SlotTemplate>,
    pub answer: Vec<SlotTemplate>,
    pub affirm: Vec<String>,
    pub deny: Vec<String>,
    pub decline: Vec<String>,
    pub dontcare: Vec<String>,
    pub noise: Vec<String>,
}

fn push_slot_template(list: &mut Vec<SlotTemplate>, slots: Vec<String>, text: &str) {
    match list.iter_mut().find(|t| t.slots == slots) {
        Some(t) => t.texts.push(text.to_owned()),
        None => list.push(SlotTemplate {
            slots,
            texts: vec![text.to_owned()],
        }),
    }
}

impl UserTemplates {
    pub fn parse(text: &str, registry: &DomainRegistry) -> Result<Self> {
        let mut t = Self::default();
        for (n, line) in content_lines(text) {
            let (kind, body) = split_pair(line, n)?;
            let bad = |msg: String| Error::Parse { line: n, msg };
            match kind.split_once(':') {
                Some(("request", domain)) => {
                    let d = registry
                        .id(domain)
                        .ok_or_else(|| bad(format!("unknown domain `{domain}`")))?;
                    t.request.entry(d).or_default().push(body.to_owned());
                }
                Some((k @ ("phrase" | "answer"), slots)) => {
                    let slots: Vec<String> = slots.split(',').map(|s| s.trim().to_owned()).collect();
                    if let Some(s) = slots.iter().find(|s| registry.domain_of_slot(s).is_none()) {
                        return Err(bad(format!("unknown slot `{s}`")));
                    }
                    let list = if k == "phrase" { &mut t.phrase } else { &mut t.answer };
                    push_slot_template(list, slots, body);
                }
                Some((other, _)) => return Err(bad(format!("unknown template kind `{other}`"))),
                None => {
                    let list = match kind {
                        "affirm" => &mut t.affirm,
                        "deny" => &mut t.deny,
                        "decline" => &mut t.decline,
                        "dontcare" => &mut t.dontcare,
                        "noise" => &mut t.noise,
                        other => return Err(bad(format!("unknown template kind `{other}`"))),
                    };
                    list.push(body.to_owned());
                }
            }
        }
        for (name, list) in [
            ("affirm", &t.affirm),
            ("deny", &t.deny),
            ("decline", &t.decline),
            ("dontcare", &t.dontcare),
            ("noise", &t.noise),
        ] {
            if list.is_empty() {
                return Err(Error::Config(format!("no `{name}` user templates")));
            }
        }
        for d in registry.info_domains() {
            if !t.request.contains_key(&d) {
                return Err(Error::Config(format!(
                    "no request template for domain `{}`",
                    registry.name(d)
                )));
            }
        }
        Ok(t)
    }

    /// Every user-side text, for vocabulary induction.
    pub fn all_texts(&self) -> impl Iterator<Item = &String> {
        self.request
            .values()
            .flatten()
            .chain(self.phrase.iter().flat_map(|t| &t.texts))
            .chain(self.answer.iter().flat_map(|t| &t.texts))
            .chain(&self.affirm)
            .chain(&self.deny)
            .chain(&self.decline)
            .chain(&self.dontcare)
    }
}

/// Picks uniformly, or the first entry when `deterministic`.
pub(crate) fn pick<'a, T>(items: &'a [T], deterministic: bool, rng: &mut impl Rng) -> &'a T {
    if deterministic {
        &items[0]
    } else {
        items.choose(rng).expect("template lists are non-empty")
    }
}

/// Substitutes goal values into a user template.
pub(crate) fn fill_user_template(text: &str, goal: &BTreeMap<String, String>) -> String {
    crate::env::acts::fill_placeholders(text, |k| {
        k.strip_prefix('$').and_then(|s| goal.get(s)).cloned()
    })
}

/// Covers `slots` greedily with the largest answer templates whose slots are
/// all still uncovered.
pub(crate) fn answer_text(
    templates: &UserTemplates,
    slots: &[String],
    goal: &BTreeMap<String, String>,
    deterministic: bool,
    rng: &mut impl Rng,
) -> String {
    let mut remaining: Vec<&String> = slots.iter().filter(|s| goal.contains_key(*s)).collect();
    let mut parts = Vec::new();
    while !remaining.is_empty() {
        let best = templates
            .answer
            .iter()
            .filter(|t| t.slots.iter().all(|s| remaining.contains(&s)))
            .max_by_key(|t| t.slots.len());
        match best {
            Some(t) => {
                parts.push(fill_user_template(pick(&t.texts, deterministic, rng), goal));
                remaining.retain(|s| !t.slots.contains(s));
            }
            None => {
                // No template: say the bare value.
                let s = remaining.remove(0);
                parts.push(goal[s].clone());
            }
        }
    }
    parts.join(" ")
}

/// Opening request for `domain`, mentioning each phrase group with probability
/// `mention_prob` (always when `deterministic`).
pub(crate) fn request_text(
    templates: &UserTemplates,
    domain: DomainId,
    domain_slots: &[String],
    goal: &BTreeMap<String, String>,
    mention_prob: f64,
    deterministic: bool,
    rng: &mut impl Rng,
) -> String {
    let mut text = pick(&templates.request[&domain], deterministic, rng).clone();
    let mut covered: Vec<&String> = Vec::new();
    for p in &templates.phrase {
        let relevant = p.slots.iter().all(|s| domain_slots.contains(s) && goal.contains_key(s));
        if !relevant || p.slots.iter().any(|s| covered.contains(&s)) {
            continue;
        }
        if deterministic || rng.gen::<f64>() < mention_prob {
            text.push(' ');
            text.push_str(&fill_user_template(pick(&p.texts, deterministic, rng), goal));
            covered.extend(p.slots.iter());
        }
    }
    text
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub error_prob: f64,
    pub correct_confidence: (f64, f64),
    pub error_confidence: (f64, f64),
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            error_prob: 0.1,
            correct_confidence: (0.5, 1.0),
            error_confidence: (0.3, 0.7),
        }
    }
}

impl NoiseConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        if !(0.0..=1.0).contains(&self.error_prob) || !ok(self.correct_confidence) || !ok(self.error_confidence) {
            return Err(Error::Config("noise probabilities and confidences must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Recognises a user utterance: each word keeps a confidence, and with
/// `error_prob` it is swapped for a confusable word (another value of the
/// same slot, or a filler word).
pub fn recognise(
    text: &str,
    noise: &NoiseConfig,
    lexicon: &SlotLexicon,
    fillers: &[String],
    rng: &mut impl Rng,
) -> Vec<(String, f64)> {
    let tokens = tokenize(text);
    if !noise.enabled {
        return tokens.into_iter().map(|t| (t, 1.0)).collect();
    }
    tokens
        .into_iter()
        .map(|t| {
            if rng.gen::<f64>() < noise.error_prob {
                let swapped = match lexicon.slot_of(&t) {
                    Some(slot) => {
                        let others: Vec<&str> =
                            lexicon.values_of(slot).into_iter().filter(|v| *v != t).collect();
                        others.choose(rng).map(|v| (*v).to_owned())
                    }
                    None => None,
                };
                let word = swapped.unwrap_or_else(|| fillers.choose(rng).cloned().unwrap_or_default());
                (word, uniform(rng, noise.error_confidence))
            } else {
                (t, uniform(rng, noise.correct_confidence))
            }
        })
        .filter(|(w, _)| !w.is_empty())
        .collect()
}

/// Belief about one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SlotStatus {
    Unknown,
    Filled { value: String, confidence: f64 },
    Confirmed { value: String },
    DontCare,
}

impl SlotStatus {
    pub fn value(&self) -> Option<&str> {
        match self {
            SlotStatus::Filled { value, .. } | SlotStatus::Confirmed { value } => Some(value),
            _ => None,
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, SlotStatus::Unknown)
    }

    pub fn is_confirmed(&self) -> bool {
        matches!(self, SlotStatus::Confirmed { .. })
    }

    pub fn is_filled(&self) -> bool {
        matches!(self, SlotStatus::Filled { .. })
    }

    /// Confirmed or explicitly not needed.
    pub fn is_resolved(&self) -> bool {
        matches!(self, SlotStatus::Confirmed { .. } | SlotStatus::DontCare)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SlotStatus::Unknown => "unknown",
            SlotStatus::Filled { .. } => "filled",
            SlotStatus::Confirmed { .. } => "confirmed",
            SlotStatus::DontCare => "dontcare",
        }
    }
}

/// Context the tracker needs about the system act the user answered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrackContext {
    Question(Vec<String>),
    ExpConfirm(Vec<String>),
    ImpConfirm(Vec<String>),
    Open,
    Other,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackResult {
    pub declined: bool,
    pub affirmed: bool,
    pub denied: bool,
}

/// Updates slot beliefs from recognised user words. Confirmed slots never
/// regress.
pub fn track(
    slots: &mut BTreeMap<String, SlotStatus>,
    ctx: &TrackContext,
    words: &[(String, f64)],
    lexicon: &SlotLexicon,
    cues: &Cues,
    has_domain_evidence: bool,
) -> TrackResult {
    let has = |set: &std::collections::BTreeSet<String>| words.iter().any(|(w, _)| set.contains(w));
    let mut mentioned = Vec::new();
    for (w, conf) in words {
        if let Some(slot) = lexicon.slot_of(w) {
            let name = slot.trim_start_matches('$').to_owned();
            if let Some(status) = slots.get_mut(&name) {
                if !status.is_confirmed() {
                    *status = SlotStatus::Filled {
                        value: w.clone(),
                        confidence: *conf,
                    };
                }
                mentioned.push(name);
            }
        }
    }
    let affirmed = has(&cues.affirm);
    let denied = has(&cues.deny);
    let mut out = TrackResult::default();
    match ctx {
        TrackContext::ExpConfirm(group) => {
            if denied {
                reset_unconfirmed(slots, group, &mentioned);
                out.denied = true;
            } else if affirmed {
                confirm_filled(slots, group, &mentioned);
                out.affirmed = true;
            }
        }
        TrackContext::ImpConfirm(group) => {
            if denied {
                reset_unconfirmed(slots, group, &mentioned);
                out.denied = true;
            } else {
                confirm_filled(slots, group, &mentioned);
                out.affirmed = true;
            }
        }
        TrackContext::Question(group) => {
            if mentioned.is_empty() && has(&cues.dontcare) {
                for s in group {
                    if let Some(st) = slots.get_mut(s) {
                        if st.is_unknown() {
                            *st = SlotStatus::DontCare;
                        }
                    }
                }
            }
        }
        TrackContext::Open => {
            out.declined = !has_domain_evidence && mentioned.is_empty() && has(&cues.decline);
        }
        TrackContext::Other => {}
    }
    out
}

fn reset_unconfirmed(slots: &mut BTreeMap<String, SlotStatus>, group: &[String], keep: &[String]) {
    for s in group {
        if keep.contains(s) {
            continue;
        }
        if let Some(st) = slots.get_mut(s) {
            if st.is_filled() {
                *st = SlotStatus::Unknown;
            }
        }
    }
}

fn confirm_filled(slots: &mut BTreeMap<String, SlotStatus>, group: &[String], skip: &[String]) {
    for s in group {
        if skip.contains(s) {
            continue;
        }
        if let Some(st) = slots.get_mut(s) {
            if let SlotStatus::Filled { value, .. } = st {
                *st = SlotStatus::Confirmed { value: value.clone() };
            }
        }
    }
}

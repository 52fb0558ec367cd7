//! System dialogue acts, the action catalog and system templates.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{DomainId, DomainRegistry};
use crate::error::{Error, Result};
use crate::text::{content_lines, split_pair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActType {
    Salutation,
    Provide,
    Request,
    AskFor,
    Apology,
    ExpConfirm,
    ImpConfirm,
    Retrieve,
}

impl ActType {
    pub const ALL: [ActType; 8] = [
        ActType::Salutation,
        ActType::Provide,
        ActType::Request,
        ActType::AskFor,
        ActType::Apology,
        ActType::ExpConfirm,
        ActType::ImpConfirm,
        ActType::Retrieve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActType::Salutation => "Salutation",
            ActType::Provide => "Provide",
            ActType::Request => "Request",
            ActType::AskFor => "AskFor",
            ActType::Apology => "Apology",
            ActType::ExpConfirm => "ExpConfirm",
            ActType::ImpConfirm => "ImpConfirm",
            ActType::Retrieve => "Retrieve",
        }
    }
}

impl FromStr for ActType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActType::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown act type `{s}`")))
    }
}

/// One act argument: `h_city` or `h_city=$h_city`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActParam {
    pub name: String,
    pub value: Option<String>,
}

/// A typed act such as `ExpConfirm(h_city=$h_city)` or `Request(hmihy)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueAct {
    pub act_type: ActType,
    pub params: Vec<ActParam>,
}

impl DialogueAct {
    pub fn new(act_type: ActType, params: &[&str]) -> Self {
        Self {
            act_type,
            params: params
                .iter()
                .map(|p| ActParam {
                    name: (*p).to_owned(),
                    value: None,
                })
                .collect(),
        }
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.name == name)
    }

    /// Parameters that name slots of the registry.
    pub fn slot_params(&self, registry: &DomainRegistry) -> Vec<String> {
        self.param_names()
            .filter(|p| registry.domain_of_slot(p).is_some())
            .map(str::to_owned)
            .collect()
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.act_type.name())?;
        for (i, p) in self.params.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(&p.name)?;
            if let Some(v) = &p.value {
                write!(f, "={v}")?;
            }
        }
        f.write_str(")")
    }
}

impl FromStr for DialogueAct {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Input(format!("act `{s}` has no argument list")))?;
        if !s.ends_with(')') {
            return Err(Error::Input(format!("act `{s}` is not closed")));
        }
        let act_type: ActType = s[..open].trim().parse()?;
        let inner = &s[open + 1..s.len() - 1];
        let mut params = Vec::new();
        for raw in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = match raw.split_once('=') {
                Some((n, v)) => (n.trim(), Some(v.trim().to_owned())),
                None => (raw, None),
            };
            if name.is_empty() {
                return Err(Error::Input(format!("empty parameter in act `{s}`")));
            }
            params.push(ActParam {
                name: name.to_owned(),
                value,
            });
        }
        Ok(Self { act_type, params })
    }
}

/// How the environment and the user react to an act.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ActKind {
    /// Salutation(closing): ends the dialogue.
    Closing,
    /// Open question such as Request(hmihy) or AskFor(more).
    OpenQuestion,
    /// Request/Apology for specific slots.
    SlotQuestion(Vec<String>),
    ExpConfirm(Vec<String>),
    ImpConfirm(Vec<String>),
    Retrieve,
    PresentInfo,
    /// Greetings, intros, thanks: the user stays silent.
    Statement,
}

pub fn classify(act: &DialogueAct, registry: &DomainRegistry) -> ActKind {
    let slots = act.slot_params(registry);
    let info = act.param_names().any(|p| p.ends_with("_info"));
    match act.act_type {
        ActType::Salutation if act.has_param("closing") => ActKind::Closing,
        ActType::Salutation => ActKind::Statement,
        ActType::Retrieve => ActKind::Retrieve,
        ActType::Provide if info => ActKind::PresentInfo,
        ActType::Provide => ActKind::Statement,
        ActType::ExpConfirm if !slots.is_empty() => ActKind::ExpConfirm(slots),
        ActType::ImpConfirm if !slots.is_empty() => ActKind::ImpConfirm(slots),
        ActType::Request | ActType::Apology if !slots.is_empty() => ActKind::SlotQuestion(slots),
        ActType::Request | ActType::Apology | ActType::AskFor => ActKind::OpenQuestion,
        ActType::ExpConfirm | ActType::ImpConfirm => ActKind::Statement,
    }
}

impl ActKind {
    /// Acts after which the user is expected to speak.
    pub fn expects_reply(&self) -> bool {
        matches!(
            self,
            ActKind::OpenQuestion | ActKind::SlotQuestion(_) | ActKind::ExpConfirm(_)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogEntry {
    pub domain: DomainId,
    pub act: DialogueAct,
}

/// Ordered list of every system act; the position is the global action index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionCatalog {
    entries: Vec<CatalogEntry>,
    by_name: HashMap<String, usize>,
}

impl ActionCatalog {
    /// Parses `domain<TAB>Act(...)` lines.
    pub fn parse(text: &str, registry: &DomainRegistry) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in content_lines(text) {
            let (domain, act) = split_pair(line, n)?;
            let domain = registry.id(domain).ok_or_else(|| Error::Parse {
                line: n,
                msg: format!("unknown domain `{domain}`"),
            })?;
            let act: DialogueAct = act.parse().map_err(|e: Error| Error::Parse {
                line: n,
                msg: e.to_string(),
            })?;
            entries.push(CatalogEntry { domain, act });
        }
        Self::new(entries)
    }

    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self> {
        let mut by_name = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if by_name.insert(e.act.to_string(), i).is_some() {
                return Err(Error::Config(format!("duplicate act {}", e.act)));
            }
        }
        if entries.is_empty() {
            return Err(Error::Config("action catalog is empty".into()));
        }
        Ok(Self { entries, by_name })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> &CatalogEntry {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn index_of(&self, act: &DialogueAct) -> Option<usize> {
        self.by_name.get(&act.to_string()).copied()
    }

    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        match name.parse::<DialogueAct>() {
            Ok(act) => self.index_of(&act),
            Err(_) => None,
        }
    }

    /// Global indices of the acts owned by `domain`, in catalog order.
    pub fn domain_actions(&self, domain: DomainId) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].domain == domain)
            .collect()
    }

    /// Keeps only acts owned by `domains`.
    pub fn restricted_to(&self, domains: &[DomainId]) -> Result<Self> {
        Self::new(
            self.entries
                .iter()
                .filter(|e| domains.contains(&e.domain))
                .cloned()
                .collect(),
        )
    }
}

/// Paraphrase pool per act, keyed by the act's display form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SystemTemplates {
    map: BTreeMap<String, Vec<String>>,
}

impl SystemTemplates {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, line) in content_lines(text) {
            let (act, para) = split_pair(line, n)?;
            let act: DialogueAct = act.parse().map_err(|e: Error| Error::Parse {
                line: n,
                msg: e.to_string(),
            })?;
            map.entry(act.to_string()).or_default().push(para.to_owned());
        }
        Ok(Self { map })
    }

    pub fn paraphrases(&self, act: &DialogueAct) -> &[String] {
        self.map.get(&act.to_string()).map_or(&[], Vec::as_slice)
    }

    /// Every act in `catalog` must have at least one paraphrase.
    pub fn check_covers(&self, catalog: &ActionCatalog) -> Result<()> {
        for e in catalog.entries() {
            if self.paraphrases(&e.act).is_empty() {
                return Err(Error::Config(format!("no template for act {}", e.act)));
            }
        }
        Ok(())
    }
}

/// Replaces `$slot` placeholders using `lookup`; unresolved placeholders stay.
pub fn fill_placeholders(template: &str, mut lookup: impl FnMut(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(pos) = rest.find(['$', '_']) {
        let (head, tail) = rest.split_at(pos);
        out.push_str(head);
        let sigil = &tail[..1];
        let name_len = tail[1..]
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(tail.len() - 1);
        let name = &tail[1..1 + name_len];
        let at_word_start = head.is_empty() || !head.ends_with(|c: char| c.is_alphanumeric());
        let resolved = if name.is_empty() || !at_word_start {
            None
        } else {
            lookup(&tail[..1 + name_len])
        };
        match resolved {
            Some(v) => out.push_str(&v),
            None => {
                out.push_str(sigil);
                out.push_str(name);
            }
        }
        rest = &tail[1 + name_len..];
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn act_round_trip() {
        for s in [
            "Salutation(greeting)",
            "ExpConfirm(h_day=$h_day,h_month=$h_month,h_nights=$h_nights)",
            "Request(r_price,r_area)",
        ] {
            let act: DialogueAct = s.parse().unwrap();
            assert_eq!(act.to_string(), s);
        }
        assert!("Shout(x)".parse::<DialogueAct>().is_err());
        assert!("Request".parse::<DialogueAct>().is_err());
    }

    #[test]
    fn placeholders_filled() {
        let out = fill_placeholders("Did you say in $h_city? _hotels.", |k| match k {
            "$h_city" => Some("edinburgh".into()),
            "_hotels" => Some("the ritz".into()),
            _ => None,
        });
        assert_eq!(out, "Did you say in edinburgh? the ritz.");
        assert_eq!(fill_placeholders("a_b $x", |_| None), "a_b $x");
    }

    #[test]
    fn classify_acts() {
        let reg = DomainRegistry::parse("meta\t\nhotels\th_city h_nights\n").unwrap();
        let kind = |s: &str| classify(&s.parse().unwrap(), &reg);
        assert_eq!(kind("Salutation(closing)"), ActKind::Closing);
        assert_eq!(kind("Salutation(greeting)"), ActKind::Statement);
        assert_eq!(kind("Request(hmihy)"), ActKind::OpenQuestion);
        assert_eq!(kind("AskFor(h_more)"), ActKind::OpenQuestion);
        assert_eq!(kind("Apology(h_nights)"), ActKind::SlotQuestion(vec!["h_nights".into()]));
        assert_eq!(kind("ExpConfirm(h_city=$h_city)"), ActKind::ExpConfirm(vec!["h_city".into()]));
        assert_eq!(kind("Provide(h_info)"), ActKind::PresentInfo);
        assert_eq!(kind("Provide(intro)"), ActKind::Statement);
        assert_eq!(kind("Retrieve(h_info)"), ActKind::Retrieve);
    }
}

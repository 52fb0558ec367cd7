//! Domain registry: the ordered set of dialogue domains and their slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::content_lines;

/// Index into a [`DomainRegistry`]; lower ids come first in the registry order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DomainId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub name: String,
    pub slots: Vec<String>,
}

impl DomainSpec {
    /// Info domains own slots and retrieve information; slotless domains
    /// (such as `meta`) only handle openings, topic selection and closings.
    pub fn is_info(&self) -> bool {
        !self.slots.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainRegistry {
    domains: Vec<DomainSpec>,
}

impl DomainRegistry {
    pub fn new(domains: Vec<DomainSpec>) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::Config("domain registry is empty".into()));
        }
        for (i, d) in domains.iter().enumerate() {
            if domains[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::Config(format!("duplicate domain `{}`", d.name)));
            }
            for s in &d.slots {
                if domains[..i].iter().any(|o| o.slots.contains(s)) {
                    return Err(Error::Config(format!("slot `{s}` belongs to two domains")));
                }
            }
        }
        Ok(Self { domains })
    }

    /// Parses `domain<TAB>slot slot ...` lines; line order is registry order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut domains = Vec::new();
        for (_, line) in content_lines(text) {
            let mut parts = line.splitn(2, '\t');
            let name = parts.next().unwrap_or_default().trim().to_owned();
            let slots = parts
                .next()
                .unwrap_or_default()
                .split_whitespace()
                .map(str::to_owned)
                .collect();
            domains.push(DomainSpec { name, slots });
        }
        Self::new(domains)
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = DomainId> + '_ {
        (0..self.domains.len()).map(DomainId)
    }

    pub fn get(&self, id: DomainId) -> &DomainSpec {
        &self.domains[id.0]
    }

    pub fn name(&self, id: DomainId) -> &str {
        &self.domains[id.0].name
    }

    pub fn slots(&self, id: DomainId) -> &[String] {
        &self.domains[id.0].slots
    }

    pub fn id(&self, name: &str) -> Option<DomainId> {
        self.domains.iter().position(|d| d.name == name).map(DomainId)
    }

    pub fn require(&self, name: &str) -> Result<DomainId> {
        self.id(name)
            .ok_or_else(|| Error::Config(format!("unknown domain `{name}`")))
    }

    /// The first slotless domain, if any.
    pub fn hub(&self) -> Option<DomainId> {
        self.domains.iter().position(|d| !d.is_info()).map(DomainId)
    }

    pub fn info_domains(&self) -> impl Iterator<Item = DomainId> + '_ {
        self.ids().filter(|&d| self.get(d).is_info())
    }

    pub fn domain_of_slot(&self, slot: &str) -> Option<DomainId> {
        let slot = slot.trim_start_matches('$');
        self.domains
            .iter()
            .position(|d| d.slots.iter().any(|s| s == slot))
            .map(DomainId)
    }

    pub fn all_slots(&self) -> impl Iterator<Item = (DomainId, &str)> + '_ {
        self.ids()
            .flat_map(move |d| self.slots(d).iter().map(move |s| (d, s.as_str())))
    }
}

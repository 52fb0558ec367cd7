//! Fixture files (domains, acts, templates, lexicons, seed corpus) and their
//! parsed form.
//!
//! The default fixtures are compiled into the library. A directory holding
//! files with the same names can replace them, either explicitly or through
//! the `NDQN_FIXTURES` environment variable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use crate::classifiers::seed::{parse_seed_corpus, SeedDialogue};
use crate::domain::{DomainId, DomainRegistry};
use crate::env::acts::{ActionCatalog, SystemTemplates};
use crate::env::user::UserTemplates;
use crate::error::{Error, Result};
use crate::text::{content_lines, split_pair, SlotLexicon, SynonymMap};

pub const FIXTURE_ENV: &str = "NDQN_FIXTURES";

pub const FILE_NAMES: [&str; 11] = [
    "domains.txt",
    "actions.txt",
    "actions_full.txt",
    "templates.txt",
    "lexicon.txt",
    "synonyms.txt",
    "keywords.txt",
    "cues.txt",
    "user_templates.txt",
    "venues.txt",
    "seed_dialogues.txt",
];

/// Raw fixture texts.
#[derive(Clone, Debug)]
pub struct FixtureFiles {
    pub domains: String,
    pub actions: String,
    pub actions_full: String,
    pub templates: String,
    pub lexicon: String,
    pub synonyms: String,
    pub keywords: String,
    pub cues: String,
    pub user_templates: String,
    pub venues: String,
    pub seed_dialogues: String,
}

macro_rules! builtin_file {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/", $name)).to_owned()
    };
}

impl FixtureFiles {
    pub fn builtin() -> Self {
        Self {
            domains: builtin_file!("domains.txt"),
            actions: builtin_file!("actions.txt"),
            actions_full: builtin_file!("actions_full.txt"),
            templates: builtin_file!("templates.txt"),
            lexicon: builtin_file!("lexicon.txt"),
            synonyms: builtin_file!("synonyms.txt"),
            keywords: builtin_file!("keywords.txt"),
            cues: builtin_file!("cues.txt"),
            user_templates: builtin_file!("user_templates.txt"),
            venues: builtin_file!("venues.txt"),
            seed_dialogues: builtin_file!("seed_dialogues.txt"),
        }
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFixture { path },
                _ => Error::Io(e),
            })
        };
        Ok(Self {
            domains: read("domains.txt")?,
            actions: read("actions.txt")?,
            actions_full: read("actions_full.txt")?,
            templates: read("templates.txt")?,
            lexicon: read("lexicon.txt")?,
            synonyms: read("synonyms.txt")?,
            keywords: read("keywords.txt")?,
            cues: read("cues.txt")?,
            user_templates: read("user_templates.txt")?,
            venues: read("venues.txt")?,
            seed_dialogues: read("seed_dialogues.txt")?,
        })
    }

    /// Directory from `NDQN_FIXTURES` when set, built-in fixtures otherwise.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(FIXTURE_ENV) {
            Some(dir) if !dir.is_empty() => Self::load_dir(&PathBuf::from(dir)),
            _ => Ok(Self::builtin()),
        }
    }

    /// Writes every fixture file into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in FILE_NAMES.iter().zip(self.texts()) {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }

    fn texts(&self) -> [&str; 11] {
        [
            &self.domains,
            &self.actions,
            &self.actions_full,
            &self.templates,
            &self.lexicon,
            &self.synonyms,
            &self.keywords,
            &self.cues,
            &self.user_templates,
            &self.venues,
            &self.seed_dialogues,
        ]
    }
}

/// Words that signal user intent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cues {
    pub affirm: BTreeSet<String>,
    pub deny: BTreeSet<String>,
    pub decline: BTreeSet<String>,
    pub dontcare: BTreeSet<String>,
}

impl Cues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cues = Self::default();
        for (n, line) in content_lines(text) {
            let (kind, word) = split_pair(line, n)?;
            let set = match kind {
                "affirm" => &mut cues.affirm,
                "deny" => &mut cues.deny,
                "decline" => &mut cues.decline,
                "dontcare" => &mut cues.dontcare,
                other => {
                    return Err(Error::Parse {
                        line: n,
                        msg: format!("unknown cue kind `{other}`"),
                    })
                }
            };
            set.insert(word.to_lowercase());
        }
        Ok(cues)
    }
}

/// Keyword → domain evidence table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Keywords {
    map: BTreeMap<String, DomainId>,
}

impl Keywords {
    pub fn parse(text: &str, registry: &DomainRegistry) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in content_lines(text) {
            let (domain, word) = split_pair(line, n)?;
            let id = registry.id(domain).ok_or_else(|| Error::Parse {
                line: n,
                msg: format!("unknown domain `{domain}`"),
            })?;
            if let Some(prev) = map.insert(word.to_lowercase(), id) {
                if prev != id {
                    return Err(Error::Parse {
                        line: n,
                        msg: format!("keyword `{word}` assigned to two domains"),
                    });
                }
            }
        }
        Ok(Self { map })
    }

    pub fn domain_of(&self, word: &str) -> Option<DomainId> {
        self.map.get(word).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, DomainId)> {
        self.map.iter().map(|(w, d)| (w.as_str(), *d))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Venue {
    pub domain: DomainId,
    pub name: String,
    pub constraints: BTreeMap<String, String>,
}

pub fn parse_venues(text: &str, registry: &DomainRegistry) -> Result<Vec<Venue>> {
    let mut out = Vec::new();
    for (n, line) in content_lines(text) {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: n,
                msg: "expected domain, name and constraints".into(),
            });
        }
        let domain = registry.id(fields[0]).ok_or_else(|| Error::Parse {
            line: n,
            msg: format!("unknown domain `{}`", fields[0]),
        })?;
        let mut constraints = BTreeMap::new();
        for c in fields[2].split(';').filter(|c| !c.trim().is_empty()) {
            let (slot, value) = c.split_once('=').ok_or_else(|| Error::Parse {
                line: n,
                msg: format!("bad constraint `{c}`"),
            })?;
            constraints.insert(slot.trim().to_owned(), value.trim().to_owned());
        }
        out.push(Venue {
            domain,
            name: fields[1].to_owned(),
            constraints,
        });
    }
    Ok(out)
}

/// Parsed fixtures shared by the environment, the classifiers and the controller.
#[derive(Clone, Debug)]
pub struct Knowledge {
    pub registry: DomainRegistry,
    pub desk_catalog: ActionCatalog,
    pub full_catalog: ActionCatalog,
    pub templates: SystemTemplates,
    pub lexicon: SlotLexicon,
    pub synonyms: SynonymMap,
    pub keywords: Keywords,
    pub cues: Cues,
    pub user: UserTemplates,
    pub venues: Vec<Venue>,
    pub seeds: Vec<SeedDialogue>,
}

impl Knowledge {
    pub fn builtin() -> Result<Self> {
        Self::from_files(&FixtureFiles::builtin())
    }

    pub fn from_env() -> Result<Self> {
        Self::from_files(&FixtureFiles::from_env()?)
    }

    pub fn from_files(files: &FixtureFiles) -> Result<Self> {
        let registry = DomainRegistry::parse(&files.domains)?;
        let desk_catalog = ActionCatalog::parse(&files.actions, &registry)?;
        let full_catalog = ActionCatalog::parse(&files.actions_full, &registry)?;
        let templates = SystemTemplates::parse(&files.templates)?;
        templates.check_covers(&desk_catalog)?;
        templates.check_covers(&full_catalog)?;
        let lexicon = SlotLexicon::parse(&files.lexicon)?;
        for (value, slot) in lexicon.iter() {
            if registry.domain_of_slot(slot).is_none() {
                return Err(Error::Config(format!("lexicon value `{value}` uses unknown slot {slot}")));
            }
        }
        let synonyms = SynonymMap::parse(&files.synonyms)?;
        let keywords = Keywords::parse(&files.keywords, &registry)?;
        let cues = Cues::parse(&files.cues)?;
        let user = UserTemplates::parse(&files.user_templates, &registry)?;
        let venues = parse_venues(&files.venues, &registry)?;
        let seeds = parse_seed_corpus(&files.seed_dialogues)?;
        for d in &seeds {
            for t in &d.turns {
                if registry.id(&t.domain).is_none() {
                    return Err(Error::Config(format!("seed corpus uses unknown domain `{}`", t.domain)));
                }
            }
        }
        Ok(Self {
            registry,
            desk_catalog,
            full_catalog,
            templates,
            lexicon,
            synonyms,
            keywords,
            cues,
            user,
            venues,
            seeds,
        })
    }

    pub fn catalog(&self, full: bool) -> &ActionCatalog {
        if full {
            &self.full_catalog
        } else {
            &self.desk_catalog
        }
    }

    /// Keyword and slot-value hits per domain for a token list.
    pub fn domain_hits(&self, tokens: &[String]) -> HashMap<DomainId, usize> {
        let mut hits = HashMap::new();
        for t in tokens {
            let d = self.keywords.domain_of(t).or_else(|| {
                self.lexicon
                    .slot_of(t)
                    .and_then(|slot| self.registry.domain_of_slot(slot))
            });
            if let Some(d) = d {
                *hits.entry(d).or_insert(0) += 1;
            }
        }
        hits
    }
}

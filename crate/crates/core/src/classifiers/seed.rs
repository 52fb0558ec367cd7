//! Seed demonstration dialogues.
//!
//! Line format: `domain | SYS | [Act(...)] | "verbalisation"` for system turns
//! and `domain | USR | | "verbalisation"` for user turns. Blank lines separate
//! dialogues and `#` starts a comment line.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::env::acts::DialogueAct;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedTurn {
    pub domain: String,
    pub speaker: Speaker,
    pub act: Option<DialogueAct>,
    pub text: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedDialogue {
    pub turns: Vec<SeedTurn>,
}

impl SeedDialogue {
    /// Maximal runs of consecutive turns in the same domain: `(domain, start, end)`.
    pub fn segments(&self) -> Vec<(&str, usize, usize)> {
        let mut out: Vec<(&str, usize, usize)> = Vec::new();
        for (i, t) in self.turns.iter().enumerate() {
            match out.last_mut() {
                Some((d, _, end)) if *d == t.domain => *end = i + 1,
                _ => out.push((&t.domain, i, i + 1)),
            }
        }
        out
    }

    /// Domain of each successive segment.
    pub fn domain_sequence(&self) -> Vec<&str> {
        self.segments().into_iter().map(|(d, _, _)| d).collect()
    }
}

pub fn parse_seed_corpus(text: &str) -> Result<Vec<SeedDialogue>> {
    let mut dialogues = Vec::new();
    let mut current = SeedDialogue::default();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !current.turns.is_empty() {
                dialogues.push(std::mem::take(&mut current));
            }
            continue;
        }
        current.turns.push(parse_turn(line, n)?);
    }
    if !current.turns.is_empty() {
        dialogues.push(current);
    }
    Ok(dialogues)
}

fn parse_turn(line: &str, n: usize) -> Result<SeedTurn> {
    let err = |msg: String| Error::Parse { line: n, msg };
    let fields: Vec<&str> = line.splitn(4, '|').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(err(format!("expected 4 `|`-separated fields, got {}", fields.len())));
    }
    let domain = fields[0];
    if domain.is_empty() {
        return Err(err("empty domain".into()));
    }
    let speaker = match fields[1] {
        "SYS" => Speaker::System,
        "USR" => Speaker::User,
        other => return Err(err(format!("unknown speaker `{other}`"))),
    };
    let act = match fields[2] {
        "" => None,
        a if a.starts_with('[') && a.ends_with(']') => Some(
            a[1..a.len() - 1]
                .parse::<DialogueAct>()
                .map_err(|e| err(e.to_string()))?,
        ),
        other => return Err(err(format!("act `{other}` must be bracketed"))),
    };
    match (speaker, &act) {
        (Speaker::System, None) => return Err(err("system turn without an act".into())),
        (Speaker::User, Some(_)) => return Err(err("user turns carry no act".into())),
        _ => {}
    }
    let text = fields[3];
    if !(text.len() >= 2 && text.starts_with('"') && text.ends_with('"')) {
        return Err(err("verbalisation must be double-quoted".into()));
    }
    Ok(SeedTurn {
        domain: domain.to_owned(),
        speaker,
        act,
        text: text[1..text.len() - 1].to_owned(),
    })
}

pub fn serialize_seed_corpus(dialogues: &[SeedDialogue]) -> String {
    let mut out = String::new();
    for (i, d) in dialogues.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for t in &d.turns {
            let (spk, act) = match (&t.speaker, &t.act) {
                (Speaker::System, Some(a)) => ("SYS", format!("[{a}]")),
                (Speaker::System, None) => ("SYS", String::new()),
                (Speaker::User, _) => ("USR", String::new()),
            };
            let _ = writeln!(out, "{} | {} | {} | \"{}\"", t.domain, spk, act, t.text);
        }
    }
    out
}

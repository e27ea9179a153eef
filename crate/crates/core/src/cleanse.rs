//! Two-step corpus cleansing: drop every copy of a text that carries
//! conflicting labels, then collapse same-label duplicates to their first
//! occurrence. Only membership changes; texts are never rewritten.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{CitationInstance, Corpus};
use crate::error::{Error, Result};

/// Duplicate-detection key: NFC composition, whitespace runs collapsed to a
/// single space, ends trimmed. Case and punctuation are kept.
pub fn normalize_text(text: &str) -> String {
    let composed: String = text.nfc().collect();
    composed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Groups of instance positions sharing a normalized text, in order of each
/// group's first occurrence. Singletons included.
fn group_positions(corpus: &Corpus) -> (Vec<String>, Vec<Vec<usize>>) {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut keys = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, inst) in corpus.iter().enumerate() {
        let key = normalize_text(&inst.text);
        match index.get(&key) {
            Some(&g) => groups[g].push(i),
            None => {
                index.insert(key.clone(), groups.len());
                keys.push(key);
                groups.push(vec![i]);
            }
        }
    }
    (keys, groups)
}

fn has_conflict(corpus: &Corpus, members: &[usize]) -> bool {
    let first = corpus.instances()[members[0]].label;
    members.iter().any(|&i| corpus.instances()[i].label != first)
}

/// Normalized text to its members, for texts appearing at least twice.
pub fn find_duplicate_groups(corpus: &Corpus) -> BTreeMap<String, Vec<CitationInstance>> {
    let (keys, groups) = group_positions(corpus);
    keys.into_iter()
        .zip(groups)
        .filter(|(_, g)| g.len() >= 2)
        .map(|(k, g)| (k, g.iter().map(|&i| corpus.instances()[i].clone()).collect()))
        .collect()
}

fn partition(corpus: &Corpus, drop: &[bool]) -> (Corpus, Vec<CitationInstance>) {
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (inst, &d) in corpus.iter().zip(drop) {
        if d {
            removed.push(inst.clone());
        } else {
            kept.push(inst.clone());
        }
    }
    (
        Corpus::from_parts_unchecked(corpus.name().to_string(), corpus.scheme().clone(), kept),
        removed,
    )
}

/// Removes all members of every duplicate group with two or more distinct labels.
pub fn remove_conflicting(corpus: &Corpus) -> (Corpus, Vec<CitationInstance>) {
    let (_, groups) = group_positions(corpus);
    let mut drop = vec![false; corpus.len()];
    for g in groups.iter().filter(|g| g.len() >= 2 && has_conflict(corpus, g)) {
        for &i in g {
            drop[i] = true;
        }
    }
    partition(corpus, &drop)
}

/// Keeps the first occurrence of every same-label duplicate group.
///
/// Fails if any duplicate group still carries conflicting labels.
pub fn dedupe_consistent(corpus: &Corpus) -> Result<(Corpus, Vec<CitationInstance>)> {
    let (keys, groups) = group_positions(corpus);
    if let Some((key, _)) = keys
        .iter()
        .zip(&groups)
        .find(|(_, g)| g.len() >= 2 && has_conflict(corpus, g))
    {
        return Err(Error::Precondition(format!(
            "duplicate group with conflicting labels remains: {key:?}"
        )));
    }
    let mut drop = vec![false; corpus.len()];
    for g in &groups {
        for &i in &g[1..] {
            drop[i] = true;
        }
    }
    Ok(partition(corpus, &drop))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassLedger {
    pub label: String,
    pub input: usize,
    pub removed_conflicting: usize,
    pub removed_duplicate: usize,
    pub retained: usize,
}

impl ClassLedger {
    pub fn removed(&self) -> usize {
        self.removed_conflicting + self.removed_duplicate
    }
}

#[derive(Clone, Debug)]
pub struct CleanseResult {
    pub retained: Corpus,
    pub removed_conflicting: Vec<CitationInstance>,
    pub removed_duplicate: Vec<CitationInstance>,
    pub ledger: Vec<ClassLedger>,
}

pub fn cleanse(corpus: &Corpus) -> Result<CleanseResult> {
    let (step1, removed_conflicting) = remove_conflicting(corpus);
    let (retained, removed_duplicate) = dedupe_consistent(&step1)?;
    let k = corpus.scheme().len();
    let tally = |insts: &[CitationInstance]| {
        let mut v = vec![0usize; k];
        for i in insts {
            v[i.label] += 1;
        }
        v
    };
    let input = corpus.class_counts();
    let conf = tally(&removed_conflicting);
    let dup = tally(&removed_duplicate);
    let kept = retained.class_counts();
    let ledger = corpus
        .scheme()
        .labels()
        .iter()
        .enumerate()
        .map(|(c, label)| ClassLedger {
            label: label.clone(),
            input: input[c],
            removed_conflicting: conf[c],
            removed_duplicate: dup[c],
            retained: kept[c],
        })
        .collect();
    let retained = retained.renamed(format!("{}-clean", corpus.name()));
    Ok(CleanseResult {
        retained,
        removed_conflicting,
        removed_duplicate,
        ledger,
    })
}

impl CleanseResult {
    pub fn total_removed(&self) -> usize {
        self.removed_conflicting.len() + self.removed_duplicate.len()
    }

    /// Ledger CSV: one row per class.
    pub fn write_ledger_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "input", "retained", "removed_conflicting", "removed_duplicate", "removed_total"])?;
        for row in &self.ledger {
            w.write_record([
                row.label.clone(),
                row.input.to_string(),
                row.retained.to_string(),
                row.removed_conflicting.to_string(),
                row.removed_duplicate.to_string(),
                row.removed().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Human-readable markdown summary.
    pub fn report_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| | ");
        s.push_str(&self.ledger.iter().map(|r| r.label.as_str()).collect::<Vec<_>>().join(" | "));
        s.push_str(" |\n|---|");
        s.push_str(&"---|".repeat(self.ledger.len()));
        s.push('\n');
        let row = |name: &str, f: &dyn Fn(&ClassLedger) -> usize| {
            format!(
                "| {name} | {} |\n",
                self.ledger.iter().map(|r| f(r).to_string()).collect::<Vec<_>>().join(" | ")
            )
        };
        s.push_str(&row("input", &|r| r.input));
        s.push_str(&row("retained", &|r| r.retained));
        s.push_str(&row("removed (conflicting labels)", &|r| r.removed_conflicting));
        s.push_str(&row("removed (same-label duplicates)", &|r| r.removed_duplicate));
        s.push_str(&row("removed (total)", &|r| r.removed()));
        s.push_str(&format!(
            "\n{} instances in, {} retained, {} removed.\n",
            self.ledger.iter().map(|r| r.input).sum::<usize>(),
            self.retained.len(),
            self.total_removed()
        ));
        s
    }
}

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use reweigh::data::{Candidate, Dataset, Example, Group, NameSpan, PropertySet};

/// One example whose text is a run of two-letter names with the pronoun
/// inserted before name `pronoun_slot`.
pub fn layout(
    id: &str,
    group: Group,
    names: usize,
    pronoun_slot: usize,
    correct: Option<usize>,
    other: usize,
) -> Example {
    let pronoun = if group == Group::Masculine { "he" } else { "she" };
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut pronoun_offset = 0;
    for i in 0..=names {
        if i == pronoun_slot {
            pronoun_offset = text.chars().count();
            text.push_str(pronoun);
            text.push(' ');
        }
        if i < names {
            let start = text.chars().count();
            text.push_str(&format!("N{} ", (b'a' + (i % 26) as u8) as char));
            spans.push(NameSpan::new(start, start + 2));
        }
    }
    let cand = |slot: usize, coreferent| Candidate {
        name: text.chars().skip(spans[slot].start).take(2).collect(),
        offset: spans[slot].start,
        coreferent,
    };
    let (a, b) = match correct {
        Some(c) => (cand(c, true), cand(other, false)),
        None => (cand(other, false), cand((other + 1) % names, false)),
    };
    Example {
        id: id.into(),
        group,
        text,
        pronoun: pronoun.into(),
        pronoun_offset,
        candidate_a: a,
        candidate_b: b,
        url: String::new(),
        name_spans: spans,
    }
}

/// GAP-shaped synthetic data: name counts and candidate positions vary by
/// group, about 10% of examples have no coreferent candidate.
pub fn synthetic_gap(rng: &mut impl Rng, per_group: usize, max_names: usize) -> Dataset {
    let mut examples = Vec::new();
    for (gi, group) in Group::ALL.into_iter().enumerate() {
        for i in 0..per_group {
            // feminine examples skew towards more names
            let hi = (max_names - 2 * (1 - gi)).max(2);
            let names = rng.gen_range(2..=hi).min(rng.gen_range(2..=hi) + gi * 2).max(2);
            let pronoun_slot = rng.gen_range(0..=names);
            let correct = rng.gen_bool(0.9).then(|| rng.gen_range(0..names));
            let mut other = rng.gen_range(0..names);
            if Some(other) == correct {
                other = (other + 1) % names;
            }
            examples.push(layout(
                &format!("{}-{i}", group.name()),
                group,
                names,
                pronoun_slot,
                correct,
                other,
            ));
        }
    }
    examples.shuffle(rng);
    Dataset::new(examples)
}

/// Small random instance whose property sets admit at least one feasible
/// weighting: one masculine and one feminine example share a membership signature.
pub fn random_instance(
    rng: &mut impl Rng,
    examples: usize,
    properties: usize,
) -> (Dataset, Vec<PropertySet>) {
    assert!(examples >= 2);
    let masculine = rng.gen_range(1..examples);
    let ds = Dataset::new(
        (0..examples)
            .map(|i| {
                let g = if i < masculine { Group::Masculine } else { Group::Feminine };
                layout(&format!("x{i}"), g, 2, 2, Some(0), 1)
            })
            .collect(),
    );
    let ids: Vec<String> = ds.examples.iter().map(|e| e.id.clone()).collect();
    let (anchor_a, anchor_b) = (&ids[rng.gen_range(0..masculine)], &ids[rng.gen_range(masculine..examples)]);
    let sets = (0..properties)
        .map(|j| {
            let mut members: BTreeSet<String> =
                ids.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect();
            if members.contains(anchor_a) {
                members.insert(anchor_b.clone());
            } else {
                members.remove(anchor_b);
            }
            PropertySet {
                label: format!("S_{j}"),
                members,
            }
        })
        .collect();
    (ds, sets)
}

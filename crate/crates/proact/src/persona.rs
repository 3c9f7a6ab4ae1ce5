//! Context-aware persona retrieval: scenario-object bank, embedding
//! based top-k scenario prediction with majority vote, and the
//! scenario-indexed persona store.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::CoarseVisualContext;
use crate::embed::{cosine, Embedder};

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("empty bank")]
    EmptyBank,
    #[error("unknown scenario \"{0}\"")]
    UnknownScenario(String),
    #[error("bank file line {line}: {reason}")]
    BankFile { line: usize, reason: String },
    #[error("persona file line {line}: {reason}")]
    PersonaFile { line: usize, reason: String },
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A scenario category name, validated against a closed (configurable)
/// set at load time.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScenarioCategory(pub String);

impl ScenarioCategory {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ScenarioCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub const DEFAULT_SCENARIOS: [&str; 9] = [
    "shopping", "travel", "chitchat", "work", "health", "outdoors", "cooking", "leisure", "others",
];

pub const FALLBACK_SCENARIO: &str = "others";

/// The closed set of admissible scenario names.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    names: BTreeSet<String>,
}

impl Default for ScenarioSet {
    fn default() -> Self {
        ScenarioSet {
            names: DEFAULT_SCENARIOS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ScenarioSet {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        ScenarioSet { names: names.into_iter().collect() }
    }

    pub fn validate(&self, name: &str) -> Result<ScenarioCategory, PersonaError> {
        if self.names.contains(name) {
            Ok(ScenarioCategory(name.to_string()))
        } else {
            Err(PersonaError::UnknownScenario(name.to_string()))
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|s| s.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub id: String,
    pub scenario: ScenarioCategory,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub objects: BTreeSet<String>,
    pub scenario: ScenarioCategory,
}

/// Persona database indexed by scenario; each persona lives under
/// exactly one scenario group, in file order.
#[derive(Debug, Clone, Default)]
pub struct PersonaStore {
    pub by_scenario: BTreeMap<ScenarioCategory, Vec<Persona>>,
}

impl PersonaStore {
    pub fn insert(&mut self, persona: Persona) {
        self.by_scenario
            .entry(persona.scenario.clone())
            .or_default()
            .push(persona);
    }

    pub fn total(&self) -> usize {
        self.by_scenario.values().map(|v| v.len()).sum()
    }
}

/// Canonical text form of an object set for embedding: labels sorted
/// lexicographically, joined by single spaces.
pub fn object_set_to_text(objects: &BTreeSet<String>) -> String {
    objects.iter().cloned().collect::<Vec<_>>().join(" ")
}

/// Predicts the scenario for a coarse visual context: cosine similarity
/// of the embedded object text against every bank entry, top
/// min(k, |bank|) selection, then majority vote.
///
/// Tie-breaks are fixed for determinism: equal-similarity entries at the
/// k-boundary prefer lower entry index; equally frequent scenarios prefer
/// higher mean similarity, then the lexicographically smaller name.
/// An empty object set short-circuits to the "others" fallback.
pub fn predict_scenario(
    c: &CoarseVisualContext,
    bank: &[BankEntry],
    k: usize,
    embedder: &dyn Embedder,
) -> Result<ScenarioCategory, PersonaError> {
    if bank.is_empty() {
        return Err(PersonaError::EmptyBank);
    }
    if c.objects.is_empty() {
        return Ok(ScenarioCategory(FALLBACK_SCENARIO.to_string()));
    }
    let query = embedder.embed(&object_set_to_text(&c.objects))?;
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(bank.len());
    for (idx, entry) in bank.iter().enumerate() {
        let emb = embedder.embed(&object_set_to_text(&entry.objects))?;
        scored.push((idx, cosine(&query, &emb)));
    }
    // Sort by similarity descending, index ascending on exact ties.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let take = k.min(bank.len()).max(1);
    let top = &scored[..take];

    let mut votes: BTreeMap<&ScenarioCategory, (usize, f64)> = BTreeMap::new();
    for (idx, sim) in top {
        let entry = votes.entry(&bank[*idx].scenario).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += *sim;
    }
    let winner = votes
        .iter()
        .map(|(scenario, (count, sim_sum))| (*scenario, *count, sim_sum / *count as f64))
        .max_by(|a, b| {
            a.1.cmp(&b.1)
                .then(a.2.partial_cmp(&b.2).unwrap())
                .then(b.0.cmp(a.0)) // reversed: smaller name wins the max
        })
        .map(|(scenario, _, _)| scenario.clone())
        .expect("top set non-empty");
    Ok(winner)
}

/// Returns the personas of one scenario group, in stored order. Unknown
/// or empty groups yield an empty list.
pub fn retrieve_personas(scenario: &ScenarioCategory, store: &PersonaStore) -> Vec<Persona> {
    store.by_scenario.get(scenario).cloned().unwrap_or_default()
}

/// Loads the scenario-object bank (one JSON object per line).
pub fn load_bank<R: BufRead>(source: R, scenarios: &ScenarioSet) -> Result<Vec<BankEntry>, PersonaError> {
    #[derive(Deserialize)]
    struct RawEntry {
        objects: Vec<String>,
        scenario: String,
    }
    let mut bank = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(&line).map_err(|e| PersonaError::BankFile {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if raw.objects.is_empty() {
            return Err(PersonaError::BankFile { line: idx + 1, reason: "empty object set".into() });
        }
        let scenario = scenarios.validate(&raw.scenario).map_err(|e| PersonaError::BankFile {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        bank.push(BankEntry {
            objects: raw.objects.iter().map(|o| o.to_lowercase()).collect(),
            scenario,
        });
    }
    Ok(bank)
}

/// Loads the persona file (one JSON object per line) into the
/// scenario-indexed store.
pub fn load_personas<R: BufRead>(
    source: R,
    scenarios: &ScenarioSet,
) -> Result<PersonaStore, PersonaError> {
    #[derive(Deserialize)]
    struct RawPersona {
        id: String,
        scenario: String,
        text: String,
    }
    let mut store = PersonaStore::default();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPersona = serde_json::from_str(&line).map_err(|e| PersonaError::PersonaFile {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if raw.text.is_empty() {
            return Err(PersonaError::PersonaFile { line: idx + 1, reason: "empty text".into() });
        }
        let scenario = scenarios.validate(&raw.scenario).map_err(|e| PersonaError::PersonaFile {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        store.insert(Persona { id: raw.id, scenario, text: raw.text });
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::BagOfWordsEmbedder;
    use proptest::prelude::*;

    fn set(labels: &[&str]) -> BTreeSet<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    fn visual(labels: &[&str]) -> CoarseVisualContext {
        CoarseVisualContext { objects: set(labels), frame_id: "f".into() }
    }

    fn entry(labels: &[&str], scenario: &str) -> BankEntry {
        BankEntry { objects: set(labels), scenario: ScenarioCategory(scenario.into()) }
    }

    #[test]
    fn object_set_text_is_sorted() {
        assert_eq!(object_set_to_text(&set(&["shelf", "headphones"])), "headphones shelf");
        assert_eq!(object_set_to_text(&set(&[])), "");
        assert_eq!(object_set_to_text(&set(&["a"])), "a");
    }

    #[test]
    fn identical_objects_give_similarity_one() {
        let bank = vec![entry(&["shelf", "price tag"], "shopping"), entry(&["bus"], "travel")];
        let got = predict_scenario(&visual(&["shelf", "price tag"]), &bank, 1, &BagOfWordsEmbedder).unwrap();
        assert_eq!(got.as_str(), "shopping");
    }

    #[test]
    fn single_shared_token_selects_matching_entry() {
        // Only the travel entry shares a token with the query, so even
        // with k covering the whole bank the vote is won on similarity.
        let bank = vec![
            entry(&["shelf", "price tag"], "shopping"),
            entry(&["bus", "bench"], "travel"),
            entry(&["desk", "monitor"], "work"),
        ];
        let got = predict_scenario(&visual(&["bus"]), &bank, 3, &BagOfWordsEmbedder).unwrap();
        assert_eq!(got.as_str(), "travel");
    }

    #[test]
    fn k_clamped_to_bank_size() {
        let bank = vec![
            entry(&["shelf"], "shopping"),
            entry(&["bus"], "travel"),
            entry(&["pan"], "cooking"),
        ];
        // k=30 with three entries must behave like k=3.
        let big = predict_scenario(&visual(&["pan"]), &bank, 30, &BagOfWordsEmbedder).unwrap();
        let exact = predict_scenario(&visual(&["pan"]), &bank, 3, &BagOfWordsEmbedder).unwrap();
        assert_eq!(big, exact);
    }

    #[test]
    fn empty_bank_errors() {
        assert!(matches!(
            predict_scenario(&visual(&["x"]), &[], 3, &BagOfWordsEmbedder),
            Err(PersonaError::EmptyBank)
        ));
    }

    #[test]
    fn empty_objects_fall_back_to_others() {
        let bank = vec![entry(&["shelf"], "shopping")];
        let got = predict_scenario(&visual(&[]), &bank, 3, &BagOfWordsEmbedder).unwrap();
        assert_eq!(got.as_str(), "others");
    }

    #[test]
    fn retrieve_returns_group_in_order() {
        let mut store = PersonaStore::default();
        for (id, text) in [("p1", "prefers organic produce"), ("p2", "budget conscious")] {
            store.insert(Persona {
                id: id.into(),
                scenario: ScenarioCategory("shopping".into()),
                text: text.into(),
            });
        }
        let got = retrieve_personas(&ScenarioCategory("shopping".into()), &store);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].id, "p1");
        assert_eq!(got[1].id, "p2");
        assert!(retrieve_personas(&ScenarioCategory("travel".into()), &store).is_empty());
    }

    #[test]
    fn retrieval_reduces_nine_groups_to_one() {
        let mut store = PersonaStore::default();
        let g = 4;
        for scenario in DEFAULT_SCENARIOS {
            for i in 0..g {
                store.insert(Persona {
                    id: format!("{scenario}-{i}"),
                    scenario: ScenarioCategory(scenario.into()),
                    text: format!("persona {i} for {scenario}"),
                });
            }
        }
        assert_eq!(store.total(), 9 * g);
        let got = retrieve_personas(&ScenarioCategory("health".into()), &store);
        assert_eq!(got.len(), g);
        assert!(got.iter().all(|p| p.scenario.as_str() == "health"));
    }

    #[test]
    fn load_bank_rejects_unknown_scenario() {
        let src = std::io::Cursor::new(br#"{"objects":["x"],"scenario":"gaming"}"#.to_vec());
        assert!(matches!(
            load_bank(src, &ScenarioSet::default()),
            Err(PersonaError::BankFile { line: 1, .. })
        ));
    }

    // Independent exhaustive oracle: full sort of all similarities with
    // identical tie-break rules, implemented separately from the
    // production path.
    pub(crate) fn oracle_predict(
        c: &CoarseVisualContext,
        bank: &[BankEntry],
        k: usize,
        embedder: &dyn Embedder,
    ) -> Option<ScenarioCategory> {
        if bank.is_empty() {
            return None;
        }
        if c.objects.is_empty() {
            return Some(ScenarioCategory(FALLBACK_SCENARIO.into()));
        }
        let q = embedder.embed(&object_set_to_text(&c.objects)).unwrap();
        let mut sims: Vec<(usize, f64)> = bank
            .iter()
            .enumerate()
            .map(|(i, e)| (i, cosine(&q, &embedder.embed(&object_set_to_text(&e.objects)).unwrap())))
            .collect();
        // Exhaustive: sort every entry, then walk from the top.
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let take = k.min(bank.len()).max(1);
        let mut counts: BTreeMap<String, (usize, f64)> = BTreeMap::new();
        for (i, s) in &sims[..take] {
            let slot = counts.entry(bank[*i].scenario.0.clone()).or_insert((0, 0.0));
            slot.0 += 1;
            slot.1 += s;
        }
        let mut best: Option<(String, usize, f64)> = None;
        for (name, (count, sum)) in counts {
            let mean = sum / count as f64;
            let better = match &best {
                None => true,
                Some((bname, bcount, bmean)) => {
                    count > *bcount
                        || (count == *bcount && mean > *bmean)
                        || (count == *bcount && mean == *bmean && name < *bname)
                }
            };
            if better {
                best = Some((name, count, mean));
            }
        }
        best.map(|(name, _, _)| ScenarioCategory(name))
    }

    fn arb_label() -> impl Strategy<Value = String> {
        proptest::sample::select(vec![
            "shelf", "bus", "desk", "pan", "map", "mat", "pill", "tent", "sofa", "tag",
        ])
        .prop_map(|s| s.to_string())
    }

    fn arb_scenario() -> impl Strategy<Value = String> {
        proptest::sample::select(DEFAULT_SCENARIOS.to_vec()).prop_map(|s| s.to_string())
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(
            entries in proptest::collection::vec(
                (proptest::collection::btree_set(arb_label(), 1..4), arb_scenario()),
                1..50,
            ),
            query in proptest::collection::btree_set(arb_label(), 0..4),
            k in 1usize..60,
        ) {
            let bank: Vec<BankEntry> = entries
                .into_iter()
                .map(|(objects, scenario)| BankEntry { objects, scenario: ScenarioCategory(scenario) })
                .collect();
            let c = CoarseVisualContext { objects: query, frame_id: "f".into() };
            let got = predict_scenario(&c, &bank, k, &BagOfWordsEmbedder).unwrap();
            let expect = oracle_predict(&c, &bank, k, &BagOfWordsEmbedder).unwrap();
            prop_assert_eq!(got, expect);
        }

        #[test]
        fn similarities_stay_in_unit_interval(
            objects in proptest::collection::btree_set(arb_label(), 1..4),
            query in proptest::collection::btree_set(arb_label(), 1..4),
        ) {
            let e = BagOfWordsEmbedder;
            let a = e.embed(&object_set_to_text(&objects)).unwrap();
            let b = e.embed(&object_set_to_text(&query)).unwrap();
            let sim = cosine(&a, &b);
            prop_assert!((0.0..=1.0).contains(&sim));
        }
    }
}

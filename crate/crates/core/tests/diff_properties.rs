//! Normalization and diff properties on generated output lists, checked
//! against a naive string-comparison oracle.

use std::collections::BTreeSet;

use proptest::prelude::*;

use repro_lens_core::diff::{canonicalize, diff_cell, diff_notebook, normalize_outputs, CellVerdict, DiffOverall};
use repro_lens_core::notebook::StreamName;
use repro_lens_core::Output;

#[path = "support/outputs.rs"]
mod outputs;
use outputs::*;

#[test]
fn oracle_examples() {
    assert_eq!(oracle_strip("\u{1b}[31mred\u{1b}[0m"), "red");
    assert_eq!(oracle_newlines("a\r\nb\rc"), "a\nb\nc");
    assert_eq!(oracle_trim_lines("a  \nb\t"), "a\nb");
    let a = [Output::stream(StreamName::Stdout, "a"), Output::stream(StreamName::Stdout, "b")];
    assert_eq!(naive_string(&a), naive_string(&[Output::stream(StreamName::Stdout, "ab")]));
    assert_eq!(
        normalize_outputs(&a),
        normalize_outputs(&[Output::stream(StreamName::Stdout, "ab")])
    );
    assert!(normalize_outputs(&[]).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn normalization_is_idempotent(list in prop::collection::vec(any_output(), 0..8)) {
        let once = normalize_outputs(&list);
        prop_assert_eq!(canonicalize(once.clone()), once.clone());
        // Kinds survive; only runs of same-name streams collapse.
        let kinds: Vec<&str> = once.iter().map(|o| o.kind()).collect();
        let mut expected: Vec<&str> = Vec::new();
        let mut last_stream: Option<StreamName> = None;
        for o in &list {
            match o {
                Output::Stream { name, .. } if last_stream == Some(*name) => {}
                Output::Stream { name, .. } => {
                    expected.push("stream");
                    last_stream = Some(*name);
                }
                other => {
                    expected.push(other.type_name());
                    last_stream = None;
                }
            }
        }
        prop_assert_eq!(kinds, expected);
    }

    #[test]
    fn diff_is_reflexive(list in prop::collection::vec(any_output(), 0..8)) {
        let d = diff_cell(&list, &list, 3);
        prop_assert_eq!(d.verdict, CellVerdict::Same);
        prop_assert!(d.detail.is_empty());
    }

    #[test]
    fn text_verdicts_agree_with_naive_oracle(
        original in prop::collection::vec(text_output(), 0..6),
        reproduced in prop::collection::vec(text_output(), 0..6),
    ) {
        let d = diff_cell(&original, &reproduced, 0);
        let differs = naive_string(&original) != naive_string(&reproduced);
        prop_assert_eq!(d.verdict != CellVerdict::Same, differs);
        if differs {
            let expected = if original.is_empty() { CellVerdict::OriginalEmpty } else { CellVerdict::Different };
            prop_assert_eq!(d.verdict, expected);
            prop_assert!(!d.detail.is_empty());
        } else {
            prop_assert!(d.detail.is_empty());
        }
    }

    #[test]
    fn differing_cells_are_localized(
        cells in prop::collection::vec(
            (prop::collection::vec(text_output(), 0..4), prop::option::of(prop::collection::vec(text_output(), 0..4))),
            0..8,
        )
    ) {
        let stored: Vec<Vec<Output>> = cells.iter().map(|(o, _)| o.clone()).collect();
        let reproduced: Vec<Vec<Output>> = cells
            .iter()
            .map(|(o, r)| r.clone().unwrap_or_else(|| o.clone()))
            .collect();
        let nb = notebook(&stored);
        let diff = diff_notebook(&nb, &completed(&nb, &reproduced));

        let code_indices: Vec<usize> = nb.code_cells().map(|c| c.index).collect();
        let brute: BTreeSet<usize> = (0..stored.len())
            .filter(|&i| !stored[i].is_empty() && naive_string(&stored[i]) != naive_string(&reproduced[i]))
            .map(|i| code_indices[i])
            .collect();
        let flagged: BTreeSet<usize> = diff.differing_cells().into_iter().collect();
        prop_assert_eq!(&flagged, &brute);
        prop_assert_eq!(diff.cells.len(), stored.len());
        let expected = if brute.is_empty() { DiffOverall::SameResults } else { DiffOverall::DifferentResults };
        prop_assert_eq!(diff.overall, expected);
    }
}

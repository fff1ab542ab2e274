use serde::{Deserialize, Serialize};

use crate::notebook::{CellKind, Notebook};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureMetrics {
    pub code_cells: usize,
    pub markdown_cells: usize,
    pub raw_cells: usize,
    pub code_cells_with_execution_count: usize,
    pub code_cells_with_outputs: usize,
    /// Stored execution counts are exactly `1..=n` top to bottom.
    /// False when the notebook has no code cells.
    pub ascending_execution_counts: bool,
    /// Every code cell carries both outputs and an execution count.
    /// False when the notebook has no code cells.
    pub all_code_cells_have_output_and_count: bool,
}

pub fn compute_structure_metrics(nb: &Notebook) -> StructureMetrics {
    let mut m = StructureMetrics::default();
    for cell in &nb.cells {
        match cell.kind {
            CellKind::Code => m.code_cells += 1,
            CellKind::Markdown => m.markdown_cells += 1,
            CellKind::Raw => m.raw_cells += 1,
        }
    }
    let counts: Vec<Option<u32>> = nb.code_cells().map(|c| c.execution_count).collect();
    m.code_cells_with_execution_count = counts.iter().flatten().count();
    m.code_cells_with_outputs = nb.code_cells().filter(|c| !c.outputs.is_empty()).count();
    m.ascending_execution_counts = !counts.is_empty()
        && counts
            .iter()
            .zip(1u32..)
            .all(|(count, expected)| *count == Some(expected));
    m.all_code_cells_have_output_and_count = m.code_cells > 0
        && nb
            .code_cells()
            .all(|c| c.execution_count.is_some() && !c.outputs.is_empty());
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::notebook::{Cell, Output};

    fn with_counts(counts: &[Option<u32>]) -> Notebook {
        let mut nb = Notebook::empty("n");
        for (i, c) in counts.iter().enumerate() {
            nb.cells.push(Cell {
                execution_count: *c,
                outputs: vec![Output::text_result("1", *c)],
                ..Cell::code(i, "1")
            });
        }
        nb
    }

    #[test]
    fn empty_notebook_counts_zero() {
        let m = compute_structure_metrics(&Notebook::empty("n"));
        assert_eq!(m.code_cells + m.markdown_cells + m.raw_cells, 0);
        assert_eq!(m.code_cells_with_execution_count, 0);
        assert_eq!(m.code_cells_with_outputs, 0);
        assert!(!m.ascending_execution_counts);
    }

    #[test]
    fn ascending_sequences() {
        assert!(compute_structure_metrics(&with_counts(&[Some(1), Some(2), Some(3)])).ascending_execution_counts);
        assert!(!compute_structure_metrics(&with_counts(&[Some(2), Some(1), None])).ascending_execution_counts);
        assert!(!compute_structure_metrics(&with_counts(&[Some(1), Some(3)])).ascending_execution_counts);
    }

    #[test]
    fn counts_by_kind() {
        let mut nb = with_counts(&[Some(1), None]);
        nb.cells[1].outputs.clear();
        nb.cells.push(Cell::markdown(2, "m"));
        let m = compute_structure_metrics(&nb);
        assert_eq!((m.code_cells, m.markdown_cells, m.raw_cells), (2, 1, 0));
        assert_eq!(m.code_cells_with_execution_count, 1);
        assert_eq!(m.code_cells_with_outputs, 1);
        assert!(!m.all_code_cells_have_output_and_count);
    }
}

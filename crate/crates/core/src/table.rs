//! HTML table grid model.
//!
//! A table is held as a rectangular slot grid where every slot names the
//! cell covering it. Row and column spans are implied by the extent of a
//! cell's slots, which keeps span bookkeeping trivial when fragments are
//! stacked, rows are dropped or boundary cells are fused.

use std::collections::BTreeMap;

use scraper::{ElementRef, Html};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorCode;
use crate::text::{join_fragments, squash_whitespace, JoinKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("table HTML unparseable: {0}")]
    Unparseable(String),
    #[error("column mismatch: upper has {upper} columns, lower has {lower}")]
    ColumnMismatch { upper: usize, lower: usize },
    #[error("judgement has {got} entries for a {expected}-column table")]
    JudgementLength { expected: usize, got: usize },
}

impl ErrorCode for TableError {
    fn code(&self) -> &'static str {
        match self {
            TableError::Unparseable(_) => "apply.TableHtmlUnparseable",
            TableError::ColumnMismatch { .. } | TableError::JudgementLength { .. } => {
                "apply.ColumnMismatch"
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub text: String,
    pub header: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableGrid {
    cells: Vec<Cell>,
    slots: Vec<Vec<usize>>,
    /// Slots that were missing in ragged source rows and filled with empty
    /// cells.
    padded: usize,
}

impl TableGrid {
    /// Parse the first `<table>` in `html`, expanding row and column spans.
    pub fn parse(html: &str) -> Result<TableGrid, TableError> {
        let fragment = Html::parse_fragment(html);
        let table = fragment
            .root_element()
            .descendants()
            .filter_map(ElementRef::wrap)
            .find(|e| e.value().name() == "table")
            .ok_or_else(|| TableError::Unparseable("no <table> element".into()))?;

        let mut rows: Vec<Vec<(Cell, usize, usize)>> = Vec::new();
        collect_rows(table, &mut rows);
        if rows.is_empty() {
            return Err(TableError::Unparseable("table has no rows".into()));
        }

        let n_rows = rows.len();
        let mut occupancy: Vec<Vec<Option<usize>>> = vec![Vec::new(); n_rows];
        let mut cells = Vec::new();
        for (r, row) in rows.into_iter().enumerate() {
            let mut c = 0;
            for (cell, rowspan, colspan) in row {
                while occupancy[r].get(c).is_some_and(Option::is_some) {
                    c += 1;
                }
                let id = cells.len();
                cells.push(cell);
                let last_row = (r + rowspan).min(n_rows);
                for slot_row in occupancy.iter_mut().take(last_row).skip(r) {
                    if slot_row.len() < c + colspan {
                        slot_row.resize(c + colspan, None);
                    }
                    for slot in slot_row.iter_mut().skip(c).take(colspan) {
                        // Overlapping spans: first claimant keeps the slot.
                        if slot.is_none() {
                            *slot = Some(id);
                        }
                    }
                }
                c += colspan;
            }
        }

        let width = occupancy.iter().map(Vec::len).max().unwrap_or(0);
        if width == 0 {
            return Err(TableError::Unparseable("table has no cells".into()));
        }
        let mut padded = 0;
        let slots = occupancy
            .into_iter()
            .map(|row| {
                (0..width)
                    .map(|c| match row.get(c).copied().flatten() {
                        Some(id) => id,
                        None => {
                            padded += 1;
                            cells.push(Cell { text: String::new(), header: false });
                            cells.len() - 1
                        }
                    })
                    .collect()
            })
            .collect();
        let mut grid = TableGrid { cells, slots, padded };
        grid.compact();
        Ok(grid)
    }

    pub fn rows(&self) -> usize {
        self.slots.len()
    }

    pub fn cols(&self) -> usize {
        self.slots.first().map_or(0, Vec::len)
    }

    pub fn padded_slots(&self) -> usize {
        self.padded
    }

    /// Text of the cell covering each column of row `r`.
    pub fn row_texts(&self, r: usize) -> Vec<String> {
        self.slots[r].iter().map(|&id| self.cells[id].text.clone()).collect()
    }

    /// Distinct cells in reading order (by their top-left slot).
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Serialize back to an HTML table, one `<tr>` per grid row.
    pub fn to_html(&self) -> String {
        let extents = self.extents();
        let mut out = String::from("<table>");
        for (r, row) in self.slots.iter().enumerate() {
            out.push_str("<tr>");
            for (c, &id) in row.iter().enumerate() {
                let ext = &extents[id];
                if ext.row0 != r || ext.col0 != c {
                    continue;
                }
                let cell = &self.cells[id];
                let tag = if cell.header { "th" } else { "td" };
                out.push('<');
                out.push_str(tag);
                let rowspan = ext.row1 - ext.row0 + 1;
                let colspan = ext.col1 - ext.col0 + 1;
                if rowspan > 1 {
                    out.push_str(&format!(" rowspan=\"{rowspan}\""));
                }
                if colspan > 1 {
                    out.push_str(&format!(" colspan=\"{colspan}\""));
                }
                out.push('>');
                out.push_str(&escape_html(&cell.text));
                out.push_str("</");
                out.push_str(tag);
                out.push('>');
            }
            out.push_str("</tr>");
        }
        out.push_str("</table>");
        out
    }

    /// Render row `r` as a standalone `<tr>` fragment of expanded cells.
    pub fn row_html(&self, r: usize) -> String {
        let mut out = String::from("<tr>");
        for text in self.row_texts(r) {
            out.push_str("<td>");
            out.push_str(&escape_html(&text));
            out.push_str("</td>");
        }
        out.push_str("</tr>");
        out
    }

    fn extents(&self) -> Vec<Extent> {
        let mut ext: Vec<Option<Extent>> = vec![None; self.cells.len()];
        for (r, row) in self.slots.iter().enumerate() {
            for (c, &id) in row.iter().enumerate() {
                let e = ext[id].get_or_insert(Extent { row0: r, col0: c, row1: r, col1: c });
                e.row0 = e.row0.min(r);
                e.col0 = e.col0.min(c);
                e.row1 = e.row1.max(r);
                e.col1 = e.col1.max(c);
            }
        }
        ext.into_iter().map(|e| e.expect("every cell covers a slot")).collect()
    }

    /// Drop cells that no longer cover any slot and renumber the rest in
    /// reading order of their top-left slot.
    fn compact(&mut self) {
        let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
        let mut cells = Vec::new();
        for row in &self.slots {
            for &id in row {
                remap.entry(id).or_insert_with(|| {
                    cells.push(self.cells[id].clone());
                    cells.len() - 1
                });
            }
        }
        for row in &mut self.slots {
            for id in row.iter_mut() {
                *id = remap[id];
            }
        }
        self.cells = cells;
    }

    /// Column range `[c0, c1]` that cell `id` covers in row `r`.
    fn span_in_row(&self, r: usize, id: usize) -> (usize, usize) {
        let row = &self.slots[r];
        let c0 = row.iter().position(|&x| x == id).unwrap_or(0);
        let c1 = row.iter().rposition(|&x| x == id).unwrap_or(c0);
        (c0, c1)
    }
}

#[derive(Debug, Clone, Copy)]
struct Extent {
    row0: usize,
    col0: usize,
    row1: usize,
    col1: usize,
}

fn collect_rows(node: ElementRef<'_>, rows: &mut Vec<Vec<(Cell, usize, usize)>>) {
    for child in node.children().filter_map(ElementRef::wrap) {
        match child.value().name() {
            "tr" => {
                let cells = child
                    .children()
                    .filter_map(ElementRef::wrap)
                    .filter(|c| matches!(c.value().name(), "td" | "th"))
                    .map(|c| {
                        let span = |attr: &str| {
                            c.value()
                                .attr(attr)
                                .and_then(|v| v.trim().parse::<usize>().ok())
                                .filter(|&v| v > 0)
                                .unwrap_or(1)
                        };
                        let text = squash_whitespace(&c.text().collect::<String>());
                        let header = c.value().name() == "th";
                        (Cell { text, header }, span("rowspan"), span("colspan"))
                    })
                    .collect();
                rows.push(cells);
            }
            "thead" | "tbody" | "tfoot" => collect_rows(child, rows),
            _ => {}
        }
    }
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// One pair of boundary cells fused into a single logical cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFusion {
    pub column: usize,
    pub upper: String,
    pub lower: String,
    pub fused: String,
    pub join: JoinKind,
}

#[derive(Debug, Clone)]
pub struct FragmentMerge {
    pub grid: TableGrid,
    pub dropped_header: bool,
    /// Cell texts removed with the repeated header row.
    pub dropped_cells: Vec<String>,
    pub fusions: Vec<CellFusion>,
    /// Columns flagged for fusion whose boundary cells had incompatible
    /// column spans and were left separate.
    pub skipped_columns: Vec<usize>,
    pub collapsed_boundary_row: bool,
}

/// Stack `lower` under `upper`, dropping a repeated header row and fusing
/// boundary cells in every column whose judgement entry is 1.
pub fn merge_fragments(
    upper: &TableGrid,
    lower: &TableGrid,
    judgement: &[u8],
) -> Result<FragmentMerge, TableError> {
    if upper.cols() != lower.cols() {
        return Err(TableError::ColumnMismatch { upper: upper.cols(), lower: lower.cols() });
    }
    if judgement.len() != upper.cols() {
        return Err(TableError::JudgementLength { expected: upper.cols(), got: judgement.len() });
    }

    let dropped_header = upper.rows() > 0 && lower.rows() > 0 && upper.row_texts(0) == lower.row_texts(0);
    let mut dropped_cells = Vec::new();
    let lower_rows: Vec<Vec<usize>> = if dropped_header {
        let survivors: std::collections::BTreeSet<usize> =
            lower.slots.iter().skip(1).flatten().copied().collect();
        let mut seen = std::collections::BTreeSet::new();
        for &id in &lower.slots[0] {
            if !survivors.contains(&id) && seen.insert(id) {
                dropped_cells.push(lower.cells[id].text.clone());
            }
        }
        lower.slots[1..].to_vec()
    } else {
        lower.slots.clone()
    };

    let offset = upper.cells.len();
    let mut grid = TableGrid {
        cells: upper.cells.iter().chain(lower.cells.iter()).cloned().collect(),
        slots: upper.slots.clone(),
        padded: upper.padded + lower.padded,
    };
    grid.slots.extend(lower_rows.into_iter().map(|row| row.into_iter().map(|id| id + offset).collect()));

    let mut fusions = Vec::new();
    let mut skipped_columns = Vec::new();
    let mut collapsed = false;
    let ru = upper.rows().checked_sub(1);
    let rl = upper.rows();
    if let Some(ru) = ru.filter(|_| rl < grid.rows()) {
        for (col, &q) in judgement.iter().enumerate() {
            if q != 1 {
                continue;
            }
            let a = grid.slots[ru][col];
            let b = grid.slots[rl][col];
            if a == b {
                continue;
            }
            if grid.span_in_row(ru, a) != grid.span_in_row(rl, b) {
                skipped_columns.push(col);
                continue;
            }
            let (fused, join) = join_fragments(&grid.cells[a].text, &grid.cells[b].text);
            fusions.push(CellFusion {
                column: col,
                upper: grid.cells[a].text.clone(),
                lower: grid.cells[b].text.clone(),
                fused: fused.clone(),
                join,
            });
            grid.cells[a].text = fused;
            for row in &mut grid.slots {
                for slot in row.iter_mut() {
                    if *slot == b {
                        *slot = a;
                    }
                }
            }
        }
        if grid.slots[rl] == grid.slots[ru] {
            grid.slots.remove(rl);
            collapsed = true;
        }
    }
    grid.compact();
    Ok(FragmentMerge {
        grid,
        dropped_header,
        dropped_cells,
        fusions,
        skipped_columns,
        collapsed_boundary_row: collapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(html: &str) -> TableGrid {
        TableGrid::parse(html).unwrap()
    }

    #[test]
    fn parses_spans_into_rectangular_grid() {
        let g = grid(
            "<table><tr><td rowspan=2>a</td><td colspan=2>b</td></tr><tr><td>c</td><td>d</td></tr></table>",
        );
        assert_eq!((g.rows(), g.cols()), (2, 3));
        assert_eq!(g.row_texts(0), vec!["a", "b", "b"]);
        assert_eq!(g.row_texts(1), vec!["a", "c", "d"]);
        assert_eq!(g.cells().len(), 4);
    }

    #[test]
    fn html_round_trip_is_a_fixpoint() {
        let src = "<table><thead><tr><th>h1</th><th>h2</th></tr></thead><tbody><tr><td rowspan=\"2\">x &amp; y</td><td>1</td></tr><tr><td>2</td></tr></tbody></table>";
        let g = grid(src);
        let html = g.to_html();
        assert_eq!(
            html,
            "<table><tr><th>h1</th><th>h2</th></tr><tr><td rowspan=\"2\">x &amp; y</td><td>1</td></tr><tr><td>2</td></tr></table>"
        );
        assert_eq!(grid(&html), g);
    }

    #[test]
    fn ragged_rows_are_padded() {
        let g = grid("<table><tr><td>a</td><td>b</td><td>c</td></tr><tr><td>d</td></tr></table>");
        assert_eq!(g.cols(), 3);
        assert_eq!(g.padded_slots(), 2);
        assert_eq!(g.row_texts(1), vec!["d", "", ""]);
    }

    #[test]
    fn unparseable_inputs() {
        assert!(matches!(TableGrid::parse("<p>no table</p>"), Err(TableError::Unparseable(_))));
        assert!(matches!(TableGrid::parse("<table></table>"), Err(TableError::Unparseable(_))));
    }

    #[test]
    fn all_zero_judgement_concatenates_rows() {
        let up = grid("<table><tr><td>H1</td><td>H2</td><td>H3</td></tr><tr><td>a</td><td>b</td><td>c</td></tr></table>");
        let low = grid("<table><tr><td>d</td><td>e</td><td>f</td></tr></table>");
        let m = merge_fragments(&up, &low, &[0, 0, 0]).unwrap();
        assert_eq!(m.grid.rows(), 3);
        assert!(!m.dropped_header);
        assert!(m.fusions.is_empty());
    }

    #[test]
    fn repeated_header_is_dropped() {
        let up = grid("<table><tr><td>H1</td><td>H2</td></tr><tr><td>a</td><td>b</td></tr></table>");
        let low = grid("<table><tr><td>H1</td><td>H2</td></tr><tr><td>c</td><td>d</td></tr></table>");
        let m = merge_fragments(&up, &low, &[0, 0]).unwrap();
        assert!(m.dropped_header);
        assert_eq!(m.dropped_cells, vec!["H1", "H2"]);
        assert_eq!(m.grid.rows(), 3);
        assert_eq!(m.grid.row_texts(2), vec!["c", "d"]);
    }

    #[test]
    fn partial_fusion_uses_a_row_span() {
        let up = grid("<table><tr><td>id</td><td>date</td><td>v</td></tr><tr><td>7</td><td>2023-</td><td>x</td></tr></table>");
        let low = grid("<table><tr><td>8</td><td>01-15</td><td>y</td></tr></table>");
        let m = merge_fragments(&up, &low, &[0, 1, 0]).unwrap();
        assert_eq!(m.fusions.len(), 1);
        assert_eq!(m.fusions[0].fused, "2023-01-15");
        assert_eq!(m.grid.rows(), 3);
        assert_eq!(m.grid.row_texts(1), vec!["7", "2023-01-15", "x"]);
        assert_eq!(m.grid.row_texts(2), vec!["8", "2023-01-15", "y"]);
        assert!(m.grid.to_html().contains("<td rowspan=\"2\">2023-01-15</td>"));
        assert!(!m.collapsed_boundary_row);
    }

    #[test]
    fn full_fusion_collapses_boundary_rows() {
        let up = grid("<table><tr><td>Name</td><td>Note</td></tr><tr><td>Jo-</td><td>long</td></tr></table>");
        let low = grid("<table><tr><td>hanna</td><td>remark</td></tr><tr><td>Ann</td><td>ok</td></tr></table>");
        let m = merge_fragments(&up, &low, &[1, 1]).unwrap();
        assert!(m.collapsed_boundary_row);
        assert_eq!(m.grid.rows(), 3);
        assert_eq!(m.grid.row_texts(1), vec!["Johanna", "long remark"]);
        assert_eq!(m.grid.row_texts(2), vec!["Ann", "ok"]);
        assert!(!m.grid.to_html().contains("rowspan"));
    }

    #[test]
    fn mismatched_inputs_error() {
        let up = grid("<table><tr><td>a</td><td>b</td></tr></table>");
        let low = grid("<table><tr><td>a</td></tr></table>");
        assert!(matches!(merge_fragments(&up, &low, &[0, 0]), Err(TableError::ColumnMismatch { .. })));
        assert!(matches!(merge_fragments(&up, &up, &[0]), Err(TableError::JudgementLength { .. })));
    }
}

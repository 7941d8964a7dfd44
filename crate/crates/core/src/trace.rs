//! Per-interaction session traces as delimited text.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::space::{Action, Cell};

/// What happened in one interaction. Rewards are those earned by the
/// interaction's moves; cells are final positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub index: u64,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub good_cell: Cell,
    pub evil_cell: Cell,
    pub evaluated_cell: Cell,
}

/// Writes a header plus one comma-separated line per row. `agents` names
/// the per-agent columns.
pub fn write_trace<W: Write>(mut out: W, agents: &[String], rows: &[TraceRow]) -> io::Result<()> {
    write!(out, "index")?;
    for name in agents {
        write!(out, ",action_{name}")?;
    }
    for name in agents {
        write!(out, ",reward_{name}")?;
    }
    writeln!(out, ",good_cell,evil_cell,evaluated_cell")?;
    for row in rows {
        write!(out, "{}", row.index)?;
        for a in &row.actions {
            write!(out, ",{a}")?;
        }
        for r in &row.rewards {
            // `{:?}` keeps the shortest exact round-trip form.
            write!(out, ",{r:?}")?;
        }
        writeln!(
            out,
            ",{},{},{}",
            row.good_cell, row.evil_cell, row.evaluated_cell
        )?;
    }
    Ok(())
}

/// Renders a trace to a string.
pub fn trace_to_string(agents: &[String], rows: &[TraceRow]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, agents, rows).expect("writing to memory");
    String::from_utf8(buf).expect("trace is ASCII")
}

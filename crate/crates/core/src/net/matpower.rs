//! Parser for MATPOWER `.m` case files.
//!
//! Only the table columns needed by this crate are read: bus type and
//! demand, generator limits and voltage setpoint, branch impedance and
//! rating, and the quadratic coefficient of polynomial generator costs.
//! Out-of-service rows (status 0) are dropped and bus ids are re-indexed
//! to be contiguous from zero.

use std::collections::HashMap;

use super::{Branch, Bus, BusKind, Generator, LoadOptions, Network};
use crate::error::{Error, Result};

/// A numeric table from the case file: rows of floats, each tagged with
/// the 1-based source line it started on.
struct Table {
    rows: Vec<(usize, Vec<f64>)>,
}

impl Table {
    fn require_cols(&self, path: &str, name: &str, n: usize) -> Result<()> {
        for (line, row) in &self.rows {
            if row.len() < n {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: *line,
                    msg: format!(
                        "{} row has {} columns, expected at least {}",
                        name,
                        row.len(),
                        n
                    ),
                });
            }
        }
        Ok(())
    }
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

/// Splits the raw text into named tables plus the `baseMVA` scalar.
fn scan(text: &str, path: &str) -> Result<(Option<f64>, HashMap<String, Table>)> {
    let mut base_mva = None;
    let mut tables: HashMap<String, Table> = HashMap::new();
    // Name of the table currently being read, if any.
    let mut open: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }

        if open.is_none() {
            if let Some(rest) = line.strip_prefix("mpc.") {
                let Some(eq) = rest.find('=') else { continue };
                let name = rest[..eq].trim().to_string();
                let value = rest[eq + 1..].trim();
                if name == "baseMVA" {
                    let value = value.trim_end_matches(';').trim();
                    let parsed = value.parse::<f64>().map_err(|_| {
                        parse_err(path, line_no, format!("invalid baseMVA `{value}`"))
                    })?;
                    base_mva = Some(parsed);
                } else if let Some(body) = value.strip_prefix('[') {
                    tables.insert(name.clone(), Table { rows: Vec::new() });
                    open = Some(name.clone());
                    if read_table_line(body, line_no, path, tables.get_mut(&name).unwrap())? {
                        open = None;
                    }
                }
                // Other scalar assignments (version strings etc.) are ignored.
            }
            continue;
        }

        let name = open.clone().unwrap();
        if read_table_line(line, line_no, path, tables.get_mut(&name).unwrap())? {
            open = None;
        }
    }

    if let Some(name) = open {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!("table `{name}` is not closed with `];`"),
        ));
    }
    Ok((base_mva, tables))
}

/// Appends the rows found on one line of an open table. Returns true when
/// the closing `];` was seen.
fn read_table_line(line: &str, line_no: usize, path: &str, table: &mut Table) -> Result<bool> {
    let (content, closed) = match line.find(']') {
        Some(pos) => (&line[..pos], true),
        None => (line, false),
    };
    for segment in content.split(';') {
        let segment = segment.trim();
        if segment.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for token in segment.split_whitespace() {
            let value = token.parse::<f64>().map_err(|_| {
                parse_err(path, line_no, format!("invalid number `{token}`"))
            })?;
            row.push(value);
        }
        table.rows.push((line_no, row));
    }
    Ok(closed)
}

pub(crate) fn parse(text: &str, path: &str, opts: &LoadOptions) -> Result<Network> {
    let (base_mva, tables) = scan(text, path)?;
    let base = base_mva.ok_or_else(|| parse_err(path, 1, "missing mpc.baseMVA"))?;
    if !(base > 0.0) {
        return Err(parse_err(path, 1, format!("baseMVA must be positive, got {base}")));
    }

    let bus_table = tables
        .get("bus")
        .ok_or_else(|| parse_err(path, 1, "missing mpc.bus table"))?;
    bus_table.require_cols(path, "bus", 4)?;

    let mut buses = Vec::with_capacity(bus_table.rows.len());
    let mut id_map: HashMap<i64, usize> = HashMap::new();
    for (line, row) in &bus_table.rows {
        let raw_id = row[0] as i64;
        let kind = match row[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            other => {
                return Err(parse_err(
                    path,
                    *line,
                    format!("bus {raw_id} has unsupported type {other}"),
                ))
            }
        };
        let id = buses.len();
        if id_map.insert(raw_id, id).is_some() {
            return Err(parse_err(path, *line, format!("duplicate bus id {raw_id}")));
        }
        buses.push(Bus {
            id,
            kind,
            p_demand: row[2] / base,
            q_demand: row[3] / base,
            v_setpoint: 1.0,
        });
    }
    let lookup = |raw: f64, line: usize, what: &str| -> Result<usize> {
        id_map.get(&(raw as i64)).copied().ok_or_else(|| {
            parse_err(path, line, format!("{what} references unknown bus {}", raw as i64))
        })
    };

    // Generator rows are kept aligned with gencost rows before dropping
    // out-of-service units, since the two tables correspond row by row.
    let mut generators = Vec::new();
    let mut kept_gen_rows = Vec::new();
    if let Some(gen_table) = tables.get("gen") {
        gen_table.require_cols(path, "gen", 10)?;
        for (raw_idx, (line, row)) in gen_table.rows.iter().enumerate() {
            if row[7] <= 0.0 {
                continue;
            }
            let bus = lookup(row[0], *line, "generator")?;
            let vg = row[5];
            if vg > 0.0 {
                buses[bus].v_setpoint = vg;
            }
            kept_gen_rows.push(raw_idx);
            generators.push(Generator {
                bus,
                p_min: row[9] / base,
                p_max: row[8] / base,
                cost_quadratic: 0.0,
                p_nominal: row[1] / base,
            });
        }

        if let Some(cost_table) = tables.get("gencost") {
            cost_table.require_cols(path, "gencost", 4)?;
            if cost_table.rows.len() != gen_table.rows.len() {
                let (line, _) = cost_table.rows[0];
                return Err(parse_err(
                    path,
                    line,
                    format!(
                        "gencost has {} rows but gen has {}",
                        cost_table.rows.len(),
                        gen_table.rows.len()
                    ),
                ));
            }
            for (gen, &raw_idx) in generators.iter_mut().zip(&kept_gen_rows) {
                let (line, row) = &cost_table.rows[raw_idx];
                let model = row[0] as i64;
                if model != 2 {
                    return Err(parse_err(
                        path,
                        *line,
                        format!("unsupported gencost model {model} (only polynomial)"),
                    ));
                }
                let ncost = row[3] as usize;
                if row.len() < 4 + ncost {
                    return Err(parse_err(
                        path,
                        *line,
                        format!("gencost row lists {ncost} coefficients but is too short"),
                    ));
                }
                // Coefficients are stored highest degree first; pick the
                // quadratic one and rescale from MW to per-unit power.
                if ncost >= 3 {
                    gen.cost_quadratic = row[4 + ncost - 3] * base * base;
                }
            }
        }
    }

    let branch_table = tables
        .get("branch")
        .ok_or_else(|| parse_err(path, 1, "missing mpc.branch table"))?;
    branch_table.require_cols(path, "branch", 6)?;
    let mut branches = Vec::new();
    for (line, row) in &branch_table.rows {
        if row.len() > 10 && row[10] <= 0.0 {
            continue;
        }
        let from = lookup(row[0], *line, "branch")?;
        let to = lookup(row[1], *line, "branch")?;
        let rate = row[5] / base;
        let tap = if row.len() > 8 && row[8] != 0.0 { row[8] } else { 1.0 };
        branches.push(Branch {
            from,
            to,
            r: row[2],
            x_nominal: row[3],
            b_charging: row[4],
            tap,
            f_rating: if rate > 0.0 { rate } else { opts.unlimited_rating_cap },
        });
    }

    Network::new(buses, branches, generators, base)
}

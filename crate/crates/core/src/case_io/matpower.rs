//! A MATPOWER `.m` subset: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch`.
//!
//! Other assignments (`mpc.version`, `mpc.gencost`, cell arrays such as
//! `mpc.bus_name`) are skipped. No MATLAB expressions are evaluated.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Branch, Bus, Grid};

pub const BUS_PQ: u8 = 1;
pub const BUS_PV: u8 = 2;
pub const BUS_REF: u8 = 3;
pub const BUS_ISOLATED: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub number: usize,
    pub kind: u8,
    /// MW
    pub pd: f64,
    /// MVAr
    pub qd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRecord {
    pub bus: usize,
    /// MW
    pub pg: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseFile {
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub gens: Vec<GenRecord>,
    pub branches: Vec<BranchRecord>,
}

struct Matrix {
    /// line on which the assignment starts
    line: usize,
    /// (line, cells)
    rows: Vec<(usize, Vec<f64>)>,
}

enum State {
    Top,
    Matrix { name: String, matrix: Matrix, row: Vec<f64>, row_line: usize },
    Cell,
}

/// Parses MATPOWER case text.
pub fn parse_matpower(text: &str) -> Result<CaseFile> {
    let mut base_mva: Option<(usize, f64)> = None;
    let mut matrices: BTreeMap<String, Matrix> = BTreeMap::new();
    let mut state = State::Top;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = strip_comment(raw);
        let mut rest: &str = line;
        loop {
            match &mut state {
                State::Top => {
                    let trimmed = rest.trim();
                    let Some(assign) = trimmed.strip_prefix("mpc.") else {
                        break;
                    };
                    let Some((name, rhs)) = assign.split_once('=') else {
                        break;
                    };
                    let name = name.trim().to_string();
                    let rhs = rhs.trim_start();
                    if let Some(after) = rhs.strip_prefix('[') {
                        state = State::Matrix {
                            name,
                            matrix: Matrix {
                                line: line_no,
                                rows: Vec::new(),
                            },
                            row: Vec::new(),
                            row_line: line_no,
                        };
                        rest = after;
                    } else if let Some(after) = rhs.strip_prefix('{') {
                        state = State::Cell;
                        rest = after;
                    } else {
                        if name == "baseMVA" {
                            let value = rhs.trim_end().trim_end_matches(';').trim();
                            let v = parse_number(value).ok_or_else(|| {
                                Error::parse(line_no, format!("baseMVA `{value}` is not a number"))
                            })?;
                            if !(v > 0.0) || !v.is_finite() {
                                return Err(Error::parse(line_no, "baseMVA must be positive"));
                            }
                            base_mva = Some((line_no, v));
                        }
                        break;
                    }
                }
                State::Cell => match rest.find('}') {
                    Some(pos) => {
                        rest = &rest[pos + 1..];
                        state = State::Top;
                    }
                    None => break,
                },
                State::Matrix {
                    name,
                    matrix,
                    row,
                    row_line,
                } => {
                    let (body, closed) = match rest.find(']') {
                        Some(pos) => (&rest[..pos], Some(pos)),
                        None => (rest, None),
                    };
                    for (k, chunk) in body.split(';').enumerate() {
                        if k > 0 {
                            finish_row(matrix, row, *row_line);
                            *row_line = line_no;
                        }
                        for cell in chunk.split(|c: char| c.is_whitespace() || c == ',') {
                            if cell.is_empty() {
                                continue;
                            }
                            if row.is_empty() {
                                *row_line = line_no;
                            }
                            let v = parse_number(cell).ok_or_else(|| {
                                Error::parse(
                                    line_no,
                                    format!(
                                        "mpc.{name} row {} column {}: `{cell}` is not a number",
                                        matrix.rows.len() + 1,
                                        row.len() + 1
                                    ),
                                )
                            })?;
                            if v.is_nan() {
                                return Err(Error::parse(
                                    line_no,
                                    format!(
                                        "mpc.{name} row {} column {}: NaN is not allowed",
                                        matrix.rows.len() + 1,
                                        row.len() + 1
                                    ),
                                ));
                            }
                            row.push(v);
                        }
                    }
                    // a newline also ends a row
                    finish_row(matrix, row, *row_line);
                    match closed {
                        Some(pos) => {
                            let State::Matrix { name, matrix, .. } =
                                std::mem::replace(&mut state, State::Top)
                            else {
                                unreachable!()
                            };
                            if matrices.insert(name.clone(), matrix).is_some() {
                                return Err(Error::parse(line_no, format!("mpc.{name} assigned twice")));
                            }
                            rest = &rest[pos + 1..];
                        }
                        None => break,
                    }
                }
            }
        }
    }

    if let State::Matrix { name, matrix, .. } = &state {
        return Err(Error::parse(
            matrix.line,
            format!("mpc.{name} is not closed with `]`"),
        ));
    }

    let eof = last_line.max(1);
    let (_, base_mva) =
        base_mva.ok_or_else(|| Error::parse(eof, "missing required value mpc.baseMVA"))?;
    let take = |m: &mut BTreeMap<String, Matrix>, name: &str| {
        m.remove(name)
            .ok_or_else(|| Error::parse(eof, format!("missing required matrix mpc.{name}")))
    };
    let bus = take(&mut matrices, "bus")?;
    let gen = take(&mut matrices, "gen")?;
    let branch = take(&mut matrices, "branch")?;

    let mut buses = Vec::with_capacity(bus.rows.len());
    for (i, (line, cells)) in bus.rows.iter().enumerate() {
        need_columns("bus", i, *line, cells, 4)?;
        let number = integer_cell("bus", i, 0, *line, cells[0])?;
        let kind = integer_cell("bus", i, 1, *line, cells[1])?;
        if !(1..=4).contains(&kind) {
            return Err(Error::parse(*line, format!("mpc.bus row {}: unknown bus type {kind}", i + 1)));
        }
        buses.push(BusRecord {
            number,
            kind: kind as u8,
            pd: cells[2],
            qd: cells[3],
        });
    }
    let mut gens = Vec::with_capacity(gen.rows.len());
    for (i, (line, cells)) in gen.rows.iter().enumerate() {
        need_columns("gen", i, *line, cells, 2)?;
        gens.push(GenRecord {
            bus: integer_cell("gen", i, 0, *line, cells[0])?,
            pg: cells[1],
            in_service: cells.get(7).is_none_or(|&s| s > 0.0),
        });
    }
    let mut branches = Vec::with_capacity(branch.rows.len());
    for (i, (line, cells)) in branch.rows.iter().enumerate() {
        need_columns("branch", i, *line, cells, 4)?;
        let x = cells[3];
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::parse(
                *line,
                format!(
                    "mpc.branch row {}: reactance {x} is not positive; the DC model needs x > 0",
                    i + 1
                ),
            ));
        }
        branches.push(BranchRecord {
            from: integer_cell("branch", i, 0, *line, cells[0])?,
            to: integer_cell("branch", i, 1, *line, cells[1])?,
            r: cells[2],
            x,
            b: cells.get(4).copied().unwrap_or(0.0),
            in_service: cells.get(10).is_none_or(|&s| s > 0.0),
        });
    }

    let case = CaseFile {
        base_mva,
        buses,
        gens,
        branches,
    };
    case.validate()?;
    Ok(case)
}

fn strip_comment(line: &str) -> &str {
    // `%` inside a quoted string (only found in cell arrays) is not a comment
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' | '"' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(s: &str) -> Option<f64> {
    match s {
        "Inf" | "+Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse::<f64>().ok(),
    }
}

fn finish_row(matrix: &mut Matrix, row: &mut Vec<f64>, line: usize) {
    if !row.is_empty() {
        matrix.rows.push((line, std::mem::take(row)));
    }
}

fn need_columns(name: &str, row: usize, line: usize, cells: &[f64], n: usize) -> Result<()> {
    if cells.len() < n {
        Err(Error::parse(
            line,
            format!("mpc.{name} row {} has {} columns, need at least {n}", row + 1, cells.len()),
        ))
    } else {
        Ok(())
    }
}

fn integer_cell(name: &str, row: usize, col: usize, line: usize, v: f64) -> Result<usize> {
    if v.fract() == 0.0 && v >= 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::parse(
            line,
            format!("mpc.{name} row {} column {}: expected a bus number, got {v}", row + 1, col + 1),
        ))
    }
}

impl CaseFile {
    /// Structural checks shared by the parser and programmatic constructors.
    pub fn validate(&self) -> Result<()> {
        let mut numbers = HashSet::new();
        for b in &self.buses {
            if !numbers.insert(b.number) {
                return Err(Error::validation(format!("duplicate bus number {}", b.number)));
            }
            if b.kind == BUS_ISOLATED {
                return Err(Error::validation(format!(
                    "bus {} is typed isolated (4); isolated buses are not supported",
                    b.number
                )));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BUS_REF).count();
        if slacks != 1 {
            return Err(Error::validation(format!(
                "expected exactly one slack (type 3) bus, found {slacks}"
            )));
        }
        for (i, g) in self.gens.iter().enumerate() {
            if !numbers.contains(&g.bus) {
                return Err(Error::validation(format!(
                    "generator {} references unknown bus {}",
                    i + 1,
                    g.bus
                )));
            }
        }
        for (i, br) in self.branches.iter().enumerate() {
            for end in [br.from, br.to] {
                if !numbers.contains(&end) {
                    return Err(Error::validation(format!(
                        "branch {i} references unknown bus {end}"
                    )));
                }
            }
            if br.from == br.to {
                return Err(Error::validation(format!("branch {i} is a self-loop")));
            }
            if !(br.x > 0.0) {
                return Err(Error::validation(format!("branch {i} has non-positive reactance")));
            }
        }
        Ok(())
    }

    /// Dense grid model: buses renumbered `0..n` in file order, power in
    /// per-unit on `base_mva`.
    pub fn to_grid(&self) -> Result<Arc<Grid>> {
        self.validate()?;
        let index: BTreeMap<usize, usize> =
            self.buses.iter().enumerate().map(|(i, b)| (b.number, i)).collect();
        let mut buses: Vec<Bus> = self
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| Bus {
                id: i,
                number: b.number,
                is_slack: b.kind == BUS_REF,
                load: b.pd / self.base_mva,
                generation: 0.0,
            })
            .collect();
        for g in self.gens.iter().filter(|g| g.in_service) {
            buses[index[&g.bus]].generation += g.pg / self.base_mva;
        }
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, br)| Branch {
                id: i,
                from_bus: index[&br.from],
                to_bus: index[&br.to],
                reactance: br.x,
                admittance_mag: 1.0 / br.r.hypot(br.x),
                in_service: br.in_service,
            })
            .collect();
        Ok(Arc::new(Grid::new(buses, branches, self.base_mva)?))
    }
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        format!("{v}")
    }
}

/// Writes the case back as MATPOWER text. Columns not modelled by
/// [`CaseFile`] are filled with neutral defaults.
pub fn write_matpower(case: &CaseFile, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {name}");
    let _ = writeln!(out, "mpc.version = '2';");
    let _ = writeln!(out, "mpc.baseMVA = {};", fmt_num(case.base_mva));
    let _ = writeln!(out, "\n%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin");
    let _ = writeln!(out, "mpc.bus = [");
    for b in &case.buses {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;",
            b.number,
            b.kind,
            fmt_num(b.pd),
            fmt_num(b.qd)
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin");
    let _ = writeln!(out, "mpc.gen = [");
    for g in &case.gens {
        let _ = writeln!(
            out,
            "\t{}\t{}\t0\t0\t0\t1\t{}\t{}\t0\t0;",
            g.bus,
            fmt_num(g.pg),
            fmt_num(case.base_mva),
            u8::from(g.in_service)
        );
    }
    let _ = writeln!(out, "];");
    let _ = writeln!(out, "\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax");
    let _ = writeln!(out, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            out,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t0\t0\t{}\t-360\t360;",
            br.from,
            br.to,
            fmt_num(br.r),
            fmt_num(br.x),
            fmt_num(br.b),
            u8::from(br.in_service)
        );
    }
    let _ = writeln!(out, "];");
    out
}

//! Free-format MPS reader/writer and the plain `name value` solution format
//! exchanged with external solver commands.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{LinearConstraint, MipInstance, ModelError, Relation, VarKind, Variable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn number(line: usize, field: &str) -> Result<f64, ParseError> {
    let lower = field.to_ascii_lowercase();
    let v = match lower.as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" | "1e30" | "1e+30" => f64::INFINITY,
        "-inf" | "-infinity" | "-1e30" | "-1e+30" => f64::NEG_INFINITY,
        _ => field
            .parse::<f64>()
            .map_err(|_| syntax(line, format!("malformed number {field:?}")))?,
    };
    if v.is_nan() {
        return Err(syntax(line, format!("malformed number {field:?}")));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Name,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Objective,
    Free,
    Constraint(Relation),
}

struct RowDecl {
    name: String,
    kind: RowKind,
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
    range: Option<f64>,
}

struct ColDecl {
    name: String,
    integer: bool,
    binary: bool,
    lower: Option<f64>,
    upper: Option<f64>,
}

/// Parses a free-format MPS document into a minimization instance.
///
/// Columns inside `MARKER INTORG/INTEND` blocks are integer with default
/// bounds `[0, +inf)`. `BV` makes a column binary. Rows with a `RANGES`
/// entry are split into two inequalities, the second named `<row>_rng`.
pub fn parse_mps(bytes: &[u8]) -> Result<MipInstance, ParseError> {
    let mut name = String::new();
    let mut maximize = false;
    let mut section: Option<Section> = None;
    let mut rows: Vec<RowDecl> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut objective_row: Option<usize> = None;
    let mut cols: Vec<ColDecl> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut objective: Vec<f64> = Vec::new();
    let mut objective_constant = 0.0;
    let mut in_integer_block = false;

    for (line_no, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line_no = line_no + 1;
        let text = std::str::from_utf8(raw).map_err(|_| syntax(line_no, "invalid UTF-8"))?;
        let text = text.trim_end_matches('\r');
        if text.trim().is_empty() || text.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();

        if !text.starts_with(char::is_whitespace) {
            let header = fields[0].to_ascii_uppercase();
            section = Some(match header.as_str() {
                "NAME" => {
                    name = fields[1..].join(" ");
                    Section::Name
                }
                "OBJSENSE" => {
                    if let Some(s) = fields.get(1) {
                        maximize = parse_sense(line_no, s)?;
                    }
                    Section::ObjSense
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                other => return Err(syntax(line_no, format!("unknown section {other}"))),
            });
            if section == Some(Section::End) {
                break;
            }
            continue;
        }

        match section {
            None | Some(Section::Name) | Some(Section::End) => {
                return Err(syntax(line_no, "data line outside of a section"));
            }
            Some(Section::ObjSense) => {
                maximize = parse_sense(line_no, fields[0])?;
            }
            Some(Section::Rows) => {
                if fields.len() != 2 {
                    return Err(syntax(line_no, "ROWS entry needs a type and a name"));
                }
                let kind = match fields[0].to_ascii_uppercase().as_str() {
                    "N" if objective_row.is_none() => RowKind::Objective,
                    "N" => RowKind::Free,
                    "L" => RowKind::Constraint(Relation::Le),
                    "G" => RowKind::Constraint(Relation::Ge),
                    "E" => RowKind::Constraint(Relation::Eq),
                    t => return Err(syntax(line_no, format!("unknown row type {t}"))),
                };
                let row_name = fields[1].to_string();
                if row_index.contains_key(&row_name) {
                    return Err(syntax(line_no, format!("duplicate row {row_name}")));
                }
                if kind == RowKind::Objective {
                    objective_row = Some(rows.len());
                }
                row_index.insert(row_name.clone(), rows.len());
                rows.push(RowDecl {
                    name: row_name,
                    kind,
                    coeffs: Vec::new(),
                    rhs: 0.0,
                    range: None,
                });
            }
            Some(Section::Columns) => {
                if fields.len() >= 3 && fields[1].trim_matches('\'').eq_ignore_ascii_case("MARKER") {
                    match fields[2].trim_matches('\'').to_ascii_uppercase().as_str() {
                        "INTORG" => in_integer_block = true,
                        "INTEND" => in_integer_block = false,
                        m => return Err(syntax(line_no, format!("unknown marker {m}"))),
                    }
                    continue;
                }
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(syntax(line_no, "COLUMNS entry needs 3 or 5 fields"));
                }
                let col = match col_index.get(fields[0]) {
                    Some(&c) => c,
                    None => {
                        col_index.insert(fields[0].to_string(), cols.len());
                        cols.push(ColDecl {
                            name: fields[0].to_string(),
                            integer: in_integer_block,
                            binary: false,
                            lower: None,
                            upper: None,
                        });
                        objective.push(0.0);
                        cols.len() - 1
                    }
                };
                for pair in fields[1..].chunks(2) {
                    let r = *row_index
                        .get(pair[0])
                        .ok_or_else(|| syntax(line_no, format!("undeclared row {}", pair[0])))?;
                    let value = number(line_no, pair[1])?;
                    if !value.is_finite() {
                        return Err(syntax(line_no, "infinite coefficient"));
                    }
                    match rows[r].kind {
                        RowKind::Objective => objective[col] += value,
                        RowKind::Free => {}
                        RowKind::Constraint(_) => rows[r].coeffs.push((col, value)),
                    }
                }
            }
            Some(Section::Rhs) | Some(Section::Ranges) => {
                // The set name is optional: odd field counts carry it.
                let entries = if fields.len() % 2 == 1 { &fields[1..] } else { &fields[..] };
                if entries.is_empty() {
                    return Err(syntax(line_no, "missing row/value pair"));
                }
                for pair in entries.chunks(2) {
                    if pair.len() != 2 {
                        return Err(syntax(line_no, "missing value"));
                    }
                    let r = *row_index
                        .get(pair[0])
                        .ok_or_else(|| syntax(line_no, format!("undeclared row {}", pair[0])))?;
                    let value = number(line_no, pair[1])?;
                    if !value.is_finite() {
                        return Err(syntax(line_no, "infinite right-hand side"));
                    }
                    if section == Some(Section::Rhs) {
                        match rows[r].kind {
                            RowKind::Objective => objective_constant = -value,
                            _ => rows[r].rhs = value,
                        }
                    } else {
                        if !matches!(rows[r].kind, RowKind::Constraint(_)) {
                            return Err(syntax(line_no, "RANGES on a free row"));
                        }
                        rows[r].range = Some(value);
                    }
                }
            }
            Some(Section::Bounds) => {
                let kind = fields[0].to_ascii_uppercase();
                let needs_value = !matches!(kind.as_str(), "FR" | "MI" | "PL" | "BV");
                // [type, set?, column, value?]
                let (col_field, value_field) = match (needs_value, fields.len()) {
                    (true, 4) => (fields[2], Some(fields[3])),
                    (true, 3) => (fields[1], Some(fields[2])),
                    (false, 3) => (fields[2], fields.get(3).copied()),
                    (false, 2) => (fields[1], None),
                    (false, 4) => (fields[2], None),
                    _ => return Err(syntax(line_no, "malformed BOUNDS entry")),
                };
                let c = *col_index
                    .get(col_field)
                    .ok_or_else(|| syntax(line_no, format!("undeclared column {col_field}")))?;
                let value = value_field.map(|v| number(line_no, v)).transpose()?;
                let col = &mut cols[c];
                match kind.as_str() {
                    "UP" => col.upper = value,
                    "LO" => col.lower = value,
                    "FX" => {
                        col.lower = value;
                        col.upper = value;
                    }
                    "FR" => {
                        col.lower = Some(f64::NEG_INFINITY);
                        col.upper = Some(f64::INFINITY);
                    }
                    "MI" => col.lower = Some(f64::NEG_INFINITY),
                    "PL" => col.upper = Some(f64::INFINITY),
                    "BV" => {
                        col.integer = true;
                        col.binary = true;
                        col.lower = Some(0.0);
                        col.upper = Some(1.0);
                    }
                    "LI" => {
                        col.integer = true;
                        col.lower = value;
                    }
                    "UI" => {
                        col.integer = true;
                        col.upper = value;
                    }
                    other => return Err(syntax(line_no, format!("unsupported bound type {other}"))),
                }
            }
        }
    }

    if objective_row.is_none() {
        return Err(syntax(0, "no objective (N) row declared"));
    }

    let variables = cols
        .into_iter()
        .map(|c| {
            let lower = c.lower.unwrap_or(0.0);
            let upper = c.upper.unwrap_or(f64::INFINITY);
            let kind = if !c.integer {
                VarKind::Continuous
            } else if c.binary && lower >= 0.0 && upper <= 1.0 {
                VarKind::Binary
            } else {
                VarKind::Integer
            };
            Variable::new(c.name, lower, upper, kind)
        })
        .collect();

    let mut used: HashSet<String> = rows.iter().map(|r| r.name.clone()).collect();
    let mut constraints = Vec::new();
    for row in rows {
        let RowKind::Constraint(rel) = row.kind else {
            continue;
        };
        if row.coeffs.iter().all(|&(_, a)| a == 0.0) {
            log::debug!("dropping empty row {}", row.name);
            continue;
        }
        match row.range {
            None => constraints.push(LinearConstraint::new(row.name, row.coeffs, rel, row.rhs)),
            Some(r) => {
                let (lo, hi) = match rel {
                    Relation::Le => (row.rhs - r.abs(), row.rhs),
                    Relation::Ge => (row.rhs, row.rhs + r.abs()),
                    Relation::Eq if r >= 0.0 => (row.rhs, row.rhs + r),
                    Relation::Eq => (row.rhs + r, row.rhs),
                };
                let mut extra = format!("{}_rng", row.name);
                while !used.insert(extra.clone()) {
                    extra.push('_');
                }
                let (first, second) = match rel {
                    Relation::Le => ((Relation::Le, hi), (Relation::Ge, lo)),
                    _ => ((Relation::Ge, lo), (Relation::Le, hi)),
                };
                constraints.push(LinearConstraint::new(row.name, row.coeffs.clone(), first.0, first.1));
                constraints.push(LinearConstraint::new(extra, row.coeffs, second.0, second.1));
            }
        }
    }

    let inst = if maximize {
        MipInstance::new_maximize(name, variables, constraints, objective, objective_constant)?
    } else {
        MipInstance::new(name, variables, constraints, objective, objective_constant)?
    };
    Ok(inst)
}

fn parse_sense(line: usize, s: &str) -> Result<bool, ParseError> {
    match s.to_ascii_uppercase().as_str() {
        "MAX" | "MAXIMIZE" => Ok(true),
        "MIN" | "MINIMIZE" => Ok(false),
        other => Err(syntax(line, format!("unknown objective sense {other}"))),
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Writes `instance` as free-format MPS in declaration order.
pub fn write_mps(instance: &MipInstance) -> String {
    let mut out = String::new();
    let mut obj_name = String::from("OBJ");
    let row_names: HashSet<&str> = instance.constraints().map(|r| &*r.name).collect();
    while row_names.contains(obj_name.as_str()) {
        obj_name.push('_');
    }

    let _ = writeln!(out, "NAME {}", instance.name());
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N {obj_name}");
    let mut by_column: Vec<Vec<(&str, f64)>> = vec![Vec::new(); instance.num_vars()];
    for row in instance.constraints() {
        let t = match row.relation {
            Relation::Le => "L",
            Relation::Ge => "G",
            Relation::Eq => "E",
        };
        let _ = writeln!(out, " {t} {}", row.name);
        for &(k, a) in row.coeffs() {
            by_column[k].push((&row.name, a));
        }
    }

    out.push_str("COLUMNS\n");
    let mut marker = 0usize;
    let mut in_block = false;
    for (k, var) in instance.variables().iter().enumerate() {
        let discrete = var.kind.is_discrete();
        if discrete != in_block {
            let tag = if discrete { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, " MARKER{marker} 'MARKER' '{tag}'");
            marker += usize::from(!discrete);
            in_block = discrete;
        }
        let c = instance.objective_coeffs()[k];
        if c != 0.0 || by_column[k].is_empty() {
            let _ = writeln!(out, " {} {obj_name} {}", var.name, fmt_num(c));
        }
        for (row, a) in &by_column[k] {
            let _ = writeln!(out, " {} {row} {}", var.name, fmt_num(*a));
        }
    }
    if in_block {
        let _ = writeln!(out, " MARKER{marker} 'MARKER' 'INTEND'");
    }

    out.push_str("RHS\n");
    if instance.objective_constant() != 0.0 {
        let _ = writeln!(out, " RHS {obj_name} {}", fmt_num(-instance.objective_constant()));
    }
    for row in instance.constraints() {
        if row.rhs != 0.0 {
            let _ = writeln!(out, " RHS {} {}", row.name, fmt_num(row.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for var in instance.variables() {
        let n = &var.name;
        if var.kind == VarKind::Binary {
            let _ = writeln!(out, " BV BND {n}");
            if var.lower != 0.0 {
                let _ = writeln!(out, " LO BND {n} {}", fmt_num(var.lower));
            }
            if var.upper != 1.0 {
                let _ = writeln!(out, " UP BND {n} {}", fmt_num(var.upper));
            }
            continue;
        }
        if var.lower == var.upper {
            let _ = writeln!(out, " FX BND {n} {}", fmt_num(var.lower));
            continue;
        }
        if var.lower == f64::NEG_INFINITY && var.upper == f64::INFINITY {
            let _ = writeln!(out, " FR BND {n}");
            continue;
        }
        if var.lower == f64::NEG_INFINITY {
            let _ = writeln!(out, " MI BND {n}");
        } else if var.lower != 0.0 {
            let _ = writeln!(out, " LO BND {n} {}", fmt_num(var.lower));
        }
        if var.upper != f64::INFINITY {
            let _ = writeln!(out, " UP BND {n} {}", fmt_num(var.upper));
        }
    }
    out.push_str("ENDATA\n");
    out
}

/// Contents of a solution file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolutionFile {
    pub values: HashMap<String, f64>,
    pub objective: Option<f64>,
    /// Value of a `# status <word>` comment line, lowercased.
    pub status: Option<String>,
}

impl SolutionFile {
    /// Dense vector in `instance` variable order; unmentioned variables are 0.
    pub fn to_dense(&self, instance: &MipInstance) -> Vec<f64> {
        instance
            .variables()
            .iter()
            .map(|v| self.values.get(&*v.name).copied().unwrap_or(0.0))
            .collect()
    }
}

/// Parses `name value` lines. Lines starting with `#` are comments, a line
/// whose first token is `objective` carries the objective value.
pub fn parse_solution_file(text: &str) -> Result<SolutionFile, ParseError> {
    let mut sol = SolutionFile::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next().is_some_and(|w| w.eq_ignore_ascii_case("status")) {
                sol.status = words.next().map(str::to_ascii_lowercase);
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let first = fields.next().unwrap_or_default();
        let value = fields
            .next()
            .ok_or_else(|| syntax(line_no, format!("missing value for {first}")))?;
        let value = number(line_no, value)?;
        if first.eq_ignore_ascii_case("objective") {
            sol.objective = Some(value);
        } else {
            sol.values.insert(first.to_string(), value);
        }
    }
    Ok(sol)
}

/// Renders a solution in the format read by [`parse_solution_file`].
/// Zero entries are omitted.
pub fn write_solution_file(instance: &MipInstance, values: &[f64], status: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(s) = status {
        let _ = writeln!(out, "# status {s}");
    }
    if let Ok(f) = instance.evaluate_objective(values) {
        let _ = writeln!(out, "objective {}", fmt_num(f));
    }
    for (var, &x) in instance.variables().iter().zip(values) {
        if x != 0.0 {
            let _ = writeln!(out, "{} {}", var.name, fmt_num(x));
        }
    }
    out
}

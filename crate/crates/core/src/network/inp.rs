//! Reader and writer for the supported subset of the EPANET INP format.
//!
//! Sections are case-insensitive, `;` starts a comment, and columns are
//! whitespace separated. All quantities are SI: metres for lengths,
//! diameters and heads, m³/h for flows.

use std::fmt::Write as _;

use super::{Curve, InpError, Junction, NetworkModel, Pattern, Pipe, Pump, Reservoir, Tank, Times};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub model: NetworkModel,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Title,
    Junctions,
    Reservoirs,
    Tanks,
    Pipes,
    Pumps,
    Curves,
    Patterns,
    Emitters,
    Times,
    Options,
    Skipped,
    End,
}

const SKIPPED_SECTIONS: &[&str] = &[
    "QUALITY",
    "REACTIONS",
    "ENERGY",
    "SOURCES",
    "MIXING",
    "REPORT",
    "COORDINATES",
    "VERTICES",
    "LABELS",
    "BACKDROP",
    "TAGS",
    "STATUS",
    "CONTROLS",
    "RULES",
    "DEMANDS",
];

fn section_for(name: &str) -> Option<Section> {
    Some(match name {
        "TITLE" => Section::Title,
        "JUNCTIONS" => Section::Junctions,
        "RESERVOIRS" => Section::Reservoirs,
        "TANKS" => Section::Tanks,
        "PIPES" => Section::Pipes,
        "PUMPS" => Section::Pumps,
        "CURVES" => Section::Curves,
        "PATTERNS" => Section::Patterns,
        "EMITTERS" => Section::Emitters,
        "TIMES" => Section::Times,
        "OPTIONS" => Section::Options,
        "END" => Section::End,
        s if SKIPPED_SECTIONS.contains(&s) => Section::Skipped,
        _ => return None,
    })
}

fn syntax(line: usize, reason: impl Into<String>) -> InpError {
    InpError::Syntax {
        line,
        reason: reason.into(),
    }
}

fn number(line: usize, tok: &str, what: &str) -> Result<f64, InpError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(line, format!("invalid {what} '{tok}'")))
}

fn expect_cols(line: usize, cols: &[&str], min: usize, max: usize, what: &str) -> Result<(), InpError> {
    if cols.len() < min || cols.len() > max {
        let expected = if min == max {
            format!("{min}")
        } else {
            format!("{min}..={max}")
        };
        return Err(syntax(
            line,
            format!("{what} row needs {expected} columns, found {}", cols.len()),
        ));
    }
    Ok(())
}

/// Parses a duration: `h:mm[:ss]`, or a number with an optional unit
/// (SEC, MIN, HOUR, DAY; hours when omitted).
fn parse_duration(line: usize, toks: &[&str]) -> Result<f64, InpError> {
    let (value, unit) = match toks {
        [v] => (*v, None),
        [v, u] => (*v, Some(u.to_ascii_uppercase())),
        _ => return Err(syntax(line, "expected a time value")),
    };
    if value.contains(':') {
        if unit.is_some() {
            return Err(syntax(line, "clock time cannot carry a unit"));
        }
        let mut secs = 0.0;
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() > 3 {
            return Err(syntax(line, format!("invalid time '{value}'")));
        }
        for (p, scale) in parts.iter().zip([3600.0, 60.0, 1.0]) {
            secs += number(line, p, "time")? * scale;
        }
        return Ok(secs);
    }
    let v = number(line, value, "time")?;
    let scale = match unit.as_deref() {
        None | Some("HOUR") | Some("HOURS") => 3600.0,
        Some("SEC") | Some("SECONDS") => 1.0,
        Some("MIN") | Some("MINUTES") => 60.0,
        Some("DAY") | Some("DAYS") => 86400.0,
        Some(u) => return Err(syntax(line, format!("unknown time unit '{u}'"))),
    };
    Ok(v * scale)
}

/// Parses INP-subset text into a validated [`NetworkModel`].
pub fn parse_inp(text: &str) -> Result<Parsed, InpError> {
    let mut model = NetworkModel::default();
    let mut warnings = Vec::new();
    let mut title = Vec::new();
    let mut emitters: Vec<(usize, String, f64)> = Vec::new();
    let mut section = Section::None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = raw.split(';').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            let name = content
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| syntax(line_no, "malformed section header"))?
                .trim()
                .to_ascii_uppercase();
            if name == "VALVES" {
                return Err(syntax(line_no, "valves are not supported"));
            }
            section = section_for(&name).ok_or_else(|| InpError::UnknownSection {
                line: line_no,
                name: format!("[{name}]"),
            })?;
            if section == Section::Skipped {
                warnings.push(ParseWarning {
                    line: line_no,
                    message: format!("section [{name}] is not modeled and was skipped"),
                });
            }
            continue;
        }

        let cols: Vec<&str> = content.split_whitespace().collect();
        match section {
            Section::None => return Err(syntax(line_no, "data outside of any section")),
            Section::Skipped => {}
            Section::End => {
                return Err(syntax(line_no, "content after [END]"));
            }
            Section::Title => title.push(content.to_string()),
            Section::Junctions => {
                expect_cols(line_no, &cols, 2, 4, "junction")?;
                model.junctions.push(Junction {
                    id: cols[0].to_string(),
                    elevation: number(line_no, cols[1], "elevation")?,
                    base_demand: match cols.get(2) {
                        Some(t) => number(line_no, t, "demand")?,
                        None => 0.0,
                    },
                    demand_pattern: cols.get(3).map(|s| s.to_string()),
                    emitter_coeff: 0.0,
                });
            }
            Section::Reservoirs => {
                expect_cols(line_no, &cols, 2, 2, "reservoir")?;
                model.reservoirs.push(Reservoir {
                    id: cols[0].to_string(),
                    total_head: number(line_no, cols[1], "head")?,
                });
            }
            Section::Tanks => {
                expect_cols(line_no, &cols, 6, 8, "tank")?;
                if cols.len() > 6 {
                    warnings.push(ParseWarning {
                        line: line_no,
                        message: format!("tank {}: volume columns ignored", cols[0]),
                    });
                }
                model.tanks.push(Tank {
                    id: cols[0].to_string(),
                    elevation: number(line_no, cols[1], "elevation")?,
                    init_level: number(line_no, cols[2], "initial level")?,
                    min_level: number(line_no, cols[3], "minimum level")?,
                    max_level: number(line_no, cols[4], "maximum level")?,
                    diameter: number(line_no, cols[5], "diameter")?,
                });
            }
            Section::Pipes => {
                expect_cols(line_no, &cols, 6, 8, "pipe")?;
                if let Some(tok) = cols.get(6) {
                    if number(line_no, tok, "minor loss")? != 0.0 {
                        warnings.push(ParseWarning {
                            line: line_no,
                            message: format!("pipe {}: minor loss ignored", cols[0]),
                        });
                    }
                }
                if let Some(status) = cols.get(7) {
                    if !status.eq_ignore_ascii_case("OPEN") {
                        return Err(syntax(line_no, format!("pipe status '{status}' is not supported")));
                    }
                }
                model.pipes.push(Pipe {
                    id: cols[0].to_string(),
                    from: cols[1].to_string(),
                    to: cols[2].to_string(),
                    length: number(line_no, cols[3], "length")?,
                    diameter: number(line_no, cols[4], "diameter")?,
                    roughness: number(line_no, cols[5], "roughness")?,
                });
            }
            Section::Pumps => {
                expect_cols(line_no, &cols, 5, 5, "pump")?;
                if !cols[3].eq_ignore_ascii_case("HEAD") {
                    return Err(syntax(line_no, format!("pump keyword '{}' is not supported", cols[3])));
                }
                model.pumps.push(Pump {
                    id: cols[0].to_string(),
                    from: cols[1].to_string(),
                    to: cols[2].to_string(),
                    curve_id: cols[4].to_string(),
                });
            }
            Section::Curves => {
                expect_cols(line_no, &cols, 3, 3, "curve")?;
                let pt = (number(line_no, cols[1], "flow")?, number(line_no, cols[2], "head")?);
                match model.curves.iter_mut().find(|c| c.id == cols[0]) {
                    Some(c) => c.points.push(pt),
                    None => model.curves.push(Curve {
                        id: cols[0].to_string(),
                        points: vec![pt],
                    }),
                }
            }
            Section::Patterns => {
                expect_cols(line_no, &cols, 2, usize::MAX, "pattern")?;
                let values = cols[1..]
                    .iter()
                    .map(|t| number(line_no, t, "multiplier"))
                    .collect::<Result<Vec<_>, _>>()?;
                match model.patterns.iter_mut().find(|p| p.id == cols[0]) {
                    Some(p) => p.multipliers.extend(values),
                    None => model.patterns.push(Pattern {
                        id: cols[0].to_string(),
                        multipliers: values,
                    }),
                }
            }
            Section::Emitters => {
                expect_cols(line_no, &cols, 2, 2, "emitter")?;
                emitters.push((line_no, cols[0].to_string(), number(line_no, cols[1], "coefficient")?));
            }
            Section::Times => parse_times_row(line_no, &cols, &mut model.times, &mut warnings)?,
            Section::Options => parse_options_row(line_no, &cols, &mut warnings)?,
        }
    }

    for (_, id, coeff) in emitters {
        let j = model
            .junctions
            .iter_mut()
            .find(|j| j.id == id)
            .ok_or_else(|| InpError::Reference {
                kind: "emitter",
                id: id.clone(),
                what: "junction",
                target: id.clone(),
            })?;
        j.emitter_coeff = coeff;
    }
    model.title = title.join("\n");
    model.validate()?;
    Ok(Parsed { model, warnings })
}

fn parse_times_row(
    line: usize,
    cols: &[&str],
    times: &mut Times,
    warnings: &mut Vec<ParseWarning>,
) -> Result<(), InpError> {
    let upper: Vec<String> = cols.iter().map(|c| c.to_ascii_uppercase()).collect();
    match upper.first().map(String::as_str) {
        Some("DURATION") => times.duration_s = Some(parse_duration(line, &cols[1..])?),
        Some("HYDRAULIC") if upper.get(1).map(String::as_str) == Some("TIMESTEP") => {
            times.hydraulic_step_s = Some(parse_duration(line, &cols[2..])?)
        }
        Some("PATTERN") if upper.get(1).map(String::as_str) == Some("TIMESTEP") => {
            times.pattern_step_s = parse_duration(line, &cols[2..])?
        }
        _ => warnings.push(ParseWarning {
            line,
            message: format!("time option '{}' ignored", cols.join(" ")),
        }),
    }
    Ok(())
}

fn parse_options_row(line: usize, cols: &[&str], warnings: &mut Vec<ParseWarning>) -> Result<(), InpError> {
    let key = cols[0].to_ascii_uppercase();
    let value = cols.get(1).map(|v| v.to_ascii_uppercase()).unwrap_or_default();
    match key.as_str() {
        "UNITS" if value != "CMH" => Err(InpError::Units(value)),
        "HEADLOSS" if value != "H-W" => Err(syntax(line, format!("headloss formula {value} is not supported"))),
        "UNITS" | "HEADLOSS" => Ok(()),
        _ => {
            warnings.push(ParseWarning {
                line,
                message: format!("option '{}' ignored", cols.join(" ")),
            });
            Ok(())
        }
    }
}

/// Writes a model back to INP-subset text. `parse_inp(to_inp(m))` returns `m`.
pub fn to_inp(model: &NetworkModel) -> String {
    let mut out = String::new();
    // write! into a String cannot fail
    let w = &mut out;
    if !model.title.is_empty() {
        writeln!(w, "[TITLE]").unwrap();
        for l in model.title.lines() {
            writeln!(w, "{l}").unwrap();
        }
        writeln!(w).unwrap();
    }
    writeln!(w, "[OPTIONS]\nUNITS CMH\nHEADLOSS H-W\n").unwrap();
    writeln!(w, "[JUNCTIONS]\n;id elevation demand pattern").unwrap();
    for j in &model.junctions {
        write!(w, "{} {} {}", j.id, j.elevation, j.base_demand).unwrap();
        if let Some(p) = &j.demand_pattern {
            write!(w, " {p}").unwrap();
        }
        writeln!(w).unwrap();
    }
    writeln!(w, "\n[RESERVOIRS]\n;id head").unwrap();
    for r in &model.reservoirs {
        writeln!(w, "{} {}", r.id, r.total_head).unwrap();
    }
    writeln!(w, "\n[TANKS]\n;id elevation init min max diameter").unwrap();
    for t in &model.tanks {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            t.id, t.elevation, t.init_level, t.min_level, t.max_level, t.diameter
        )
        .unwrap();
    }
    writeln!(w, "\n[PIPES]\n;id from to length diameter roughness").unwrap();
    for p in &model.pipes {
        writeln!(
            w,
            "{} {} {} {} {} {}",
            p.id, p.from, p.to, p.length, p.diameter, p.roughness
        )
        .unwrap();
    }
    writeln!(w, "\n[PUMPS]").unwrap();
    for p in &model.pumps {
        writeln!(w, "{} {} {} HEAD {}", p.id, p.from, p.to, p.curve_id).unwrap();
    }
    writeln!(w, "\n[CURVES]").unwrap();
    for c in &model.curves {
        for (q, h) in &c.points {
            writeln!(w, "{} {} {}", c.id, q, h).unwrap();
        }
    }
    writeln!(w, "\n[PATTERNS]").unwrap();
    for p in &model.patterns {
        for chunk in p.multipliers.chunks(8) {
            write!(w, "{}", p.id).unwrap();
            for m in chunk {
                write!(w, " {m}").unwrap();
            }
            writeln!(w).unwrap();
        }
    }
    writeln!(w, "\n[EMITTERS]").unwrap();
    for j in model.junctions.iter().filter(|j| j.emitter_coeff != 0.0) {
        writeln!(w, "{} {}", j.id, j.emitter_coeff).unwrap();
    }
    writeln!(w, "\n[TIMES]").unwrap();
    if let Some(d) = model.times.duration_s {
        writeln!(w, "DURATION {d} SEC").unwrap();
    }
    if let Some(h) = model.times.hydraulic_step_s {
        writeln!(w, "HYDRAULIC TIMESTEP {h} SEC").unwrap();
    }
    writeln!(w, "PATTERN TIMESTEP {} SEC", model.times.pattern_step_s).unwrap();
    writeln!(w, "\n[END]").unwrap();
    out
}

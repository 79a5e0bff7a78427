use std::io::Write;

use anyhow::Result;
use clap::ValueEnum;
use flashquad::tree::{HitBasis, QueryHit, QueryResult, StatsReport};
use flashquad::{ObjectKind, TreeHandle};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

fn kind_name(k: ObjectKind) -> &'static str {
    match k {
        ObjectKind::Gantry => "gantry",
        ObjectKind::Zone => "zone",
    }
}

fn basis_name(b: HitBasis) -> &'static str {
    match b {
        HitBasis::InsideEntry => "inside",
        HitBasis::EdgeTest => "edge",
        HitBasis::Distance => "distance",
    }
}

fn hit_json(h: &QueryHit) -> Value {
    let mut v = json!({
        "id": h.id,
        "kind": kind_name(h.kind),
        "basis": basis_name(h.basis),
        "page": h.page.get(),
    });
    if let Some(p) = h.at {
        v["x"] = json!(p.x);
        v["y"] = json!(p.y);
    }
    v
}

pub fn query<W: Write>(w: &mut W, fmt: Format, version: u32, r: &QueryResult) -> Result<()> {
    let c = &r.cost;
    match fmt {
        Format::Text => {
            for h in &r.hits {
                write!(w, "{} {} {}", kind_name(h.kind), h.id, basis_name(h.basis))?;
                if let Some(p) = h.at {
                    write!(w, " {},{}", p.x, p.y)?;
                }
                writeln!(w)?;
            }
            eprintln!(
                "version {version}: {} hit(s), {} page requests ({} read, {} cached), {} polygon tests",
                r.hits.len(),
                c.requests(),
                c.device_reads,
                c.cache_hits,
                c.polygon_tests
            );
        }
        Format::Csv => {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["id", "kind", "basis", "x", "y"])?;
            for h in &r.hits {
                let (x, y) = h.at.map_or((String::new(), String::new()), |p| (p.x.to_string(), p.y.to_string()));
                c.write_record([h.id.to_string().as_str(), kind_name(h.kind), basis_name(h.basis), &x, &y])?;
            }
            c.flush()?;
        }
        Format::Json => {
            let v = json!({
                "version": version,
                "hits": r.hits.iter().map(hit_json).collect::<Vec<_>>(),
                "cost": {
                    "index_pages": c.index_pages,
                    "data_pages": c.data_pages,
                    "pages_read": c.device_reads,
                    "cache_hits": c.cache_hits,
                    "polygon_tests": c.polygon_tests,
                },
            });
            writeln!(w, "{}", serde_json::to_string_pretty(&v)?)?;
        }
    }
    Ok(())
}

pub fn stats<W: Write>(w: &mut W, fmt: Format, version: u32, s: &StatsReport) -> Result<()> {
    let rows = s.rows();
    match fmt {
        Format::Text => {
            writeln!(w, "version {version}")?;
            for (row, label, value) in rows {
                writeln!(w, "{row}  {label:<32} {value}")?;
            }
        }
        Format::Csv => {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["row", "label", "value"])?;
            for (row, label, value) in rows {
                c.write_record([row.to_string().as_str(), label, &value])?;
            }
            c.flush()?;
        }
        Format::Json => {
            let rows: Vec<Value> = rows
                .into_iter()
                .map(|(row, label, value)| json!({"row": row.to_string(), "label": label, "value": value}))
                .collect();
            writeln!(w, "{}", serde_json::to_string_pretty(&json!({"version": version, "rows": rows}))?)?;
        }
    }
    Ok(())
}

pub fn versions<W: Write>(w: &mut W, fmt: Format, list: &[TreeHandle], current: Option<u32>) -> Result<()> {
    let state = |h: &TreeHandle| {
        if !h.committed {
            "pending"
        } else if Some(h.version) == current {
            "current"
        } else {
            "committed"
        }
    };
    match fmt {
        Format::Text => {
            for h in list {
                writeln!(w, "{:>6}  root {:>7}  {}", h.version, h.root, state(h))?;
            }
        }
        Format::Csv => {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["version", "root", "state"])?;
            for h in list {
                c.write_record([h.version.to_string().as_str(), &h.root.to_string(), state(h)])?;
            }
            c.flush()?;
        }
        Format::Json => {
            let v: Vec<Value> = list
                .iter()
                .map(|h| json!({"version": h.version, "root": h.root.get(), "state": state(h)}))
                .collect();
            writeln!(w, "{}", serde_json::to_string_pretty(&v)?)?;
        }
    }
    Ok(())
}

//! Instance files.
//!
//! JSON:
//!
//! ```json
//! { "queries": ["q_1", "q_2"],
//!   "objects": [{ "name": "a", "prior": 0.5, "group": "x", "responses": [0, 1] }, …] }
//! ```
//!
//! CSV: a header `name,group,prior,<query names…>` and one row per object.
//! An empty `group` column on every row means the instance is unlabeled.
//!
//! Group labels may be numbers or strings. On load they are renumbered to
//! contiguous ids `1..=m` and the original spellings are kept in
//! `group_names`: numerically when every label is an integer, otherwise in
//! order of first appearance.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    #[serde(default)]
    queries: Option<Vec<String>>,
    objects: Vec<ObjectRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObjectRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group: Option<Value>,
    responses: Vec<u8>,
}

/// Renumbers raw labels to `1..=m`, returning ids and the original names.
fn normalize_groups(raw: &[String]) -> (Vec<u32>, Vec<String>) {
    let mut distinct: Vec<String> = Vec::new();
    for label in raw {
        if !distinct.contains(label) {
            distinct.push(label.clone());
        }
    }
    let numeric: Option<Vec<i64>> = distinct.iter().map(|s| s.parse().ok()).collect();
    if let Some(values) = numeric {
        let mut order: Vec<usize> = (0..distinct.len()).collect();
        order.sort_by_key(|&i| values[i]);
        distinct = order.into_iter().map(|i| distinct[i].clone()).collect();
    }
    let index: HashMap<&str, u32> = distinct
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32 + 1))
        .collect();
    let ids = raw.iter().map(|s| index[s.as_str()]).collect();
    (ids, distinct)
}

fn group_label(value: &Value) -> Result<String> {
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(Error::Format(format!("group label must be a string or number, got {other}"))),
    }
}

/// Collects optional per-object fields; either all present or all absent.
fn all_or_none<T>(items: Vec<Option<T>>, what: &str) -> Result<Option<Vec<T>>> {
    let present = items.iter().filter(|x| x.is_some()).count();
    if present == 0 {
        Ok(None)
    } else if present == items.len() {
        Ok(Some(items.into_iter().flatten().collect()))
    } else {
        Err(Error::Format(format!("{what} given for {present} of {} objects", items.len())))
    }
}

fn uniform(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

fn assemble(
    names: Vec<Option<String>>,
    priors: Vec<Option<f64>>,
    groups: Vec<Option<String>>,
    responses: Vec<Vec<bool>>,
    queries: Option<Vec<String>>,
) -> Result<ProblemInstance> {
    let m = responses.len();
    let prior = all_or_none(priors, "prior")?.unwrap_or_else(|| uniform(m));
    let mut inst = ProblemInstance::new(responses, prior);
    inst.object_names = all_or_none(names, "name")?;
    inst.query_names = queries;
    if let Some(raw) = all_or_none(groups, "group")? {
        let (ids, names) = normalize_groups(&raw);
        inst.labels = Some(ids);
        inst.group_names = Some(names);
    }
    inst.ensure_valid()?;
    Ok(inst)
}

fn bit(value: u8) -> Result<bool> {
    match value {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::Format(format!("response bit must be 0 or 1, got {other}"))),
    }
}

pub fn instance_from_json(json: &str) -> Result<ProblemInstance> {
    let file: InstanceFile = serde_json::from_str(json)?;
    let mut names = Vec::new();
    let mut priors = Vec::new();
    let mut groups = Vec::new();
    let mut responses = Vec::new();
    for object in file.objects {
        names.push(object.name);
        priors.push(object.prior);
        groups.push(object.group.as_ref().map(group_label).transpose()?);
        responses.push(object.responses.into_iter().map(bit).collect::<Result<Vec<_>>>()?);
    }
    assemble(names, priors, groups, responses, file.queries)
}

fn group_value(inst: &ProblemInstance, object: usize) -> Option<Value> {
    let id = *inst.labels.as_ref()?.get(object)?;
    let name = inst.group_names.as_ref().and_then(|g| g.get(id as usize - 1));
    Some(match name {
        Some(n) => match n.parse::<i64>() {
            Ok(v) => Value::from(v),
            Err(_) => Value::from(n.as_str()),
        },
        None => Value::from(id),
    })
}

fn to_file(inst: &ProblemInstance) -> InstanceFile {
    InstanceFile {
        queries: Some((0..inst.num_queries()).map(|q| inst.query_name(q)).collect()),
        objects: (0..inst.num_objects())
            .map(|i| ObjectRecord {
                name: Some(inst.object_name(i)),
                prior: Some(inst.prior[i]),
                group: group_value(inst, i),
                responses: inst.responses[i].iter().map(|&b| u8::from(b)).collect(),
            })
            .collect(),
    }
}

pub fn instance_to_json(inst: &ProblemInstance) -> String {
    serde_json::to_string_pretty(&to_file(inst)).expect("instance serializes")
}

pub fn instance_from_csv<R: std::io::Read>(reader: R) -> Result<ProblemInstance> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 4 {
        return Err(Error::Format("csv needs name, group, prior and at least one query column".into()));
    }
    let queries: Vec<String> = header.iter().skip(3).map(str::to_owned).collect();
    let mut names = Vec::new();
    let mut priors = Vec::new();
    let mut groups = Vec::new();
    let mut responses = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        names.push(Some(field(0).to_owned()).filter(|s| !s.is_empty()));
        groups.push(Some(field(1).to_owned()).filter(|s| !s.is_empty()));
        priors.push(match field(2) {
            "" => None,
            p => Some(p.parse::<f64>().map_err(|e| Error::Format(format!("row {}: prior `{p}`: {e}", line + 1)))?),
        });
        let row = record
            .iter()
            .skip(3)
            .map(|b| match b {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Format(format!("row {}: response `{other}` is not 0 or 1", line + 1))),
            })
            .collect::<Result<Vec<_>>>()?;
        responses.push(row);
    }
    assemble(names, priors, groups, responses, Some(queries))
}

pub fn instance_to_csv(inst: &ProblemInstance) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["name".to_owned(), "group".to_owned(), "prior".to_owned()];
    header.extend((0..inst.num_queries()).map(|q| inst.query_name(q)));
    wtr.write_record(&header)?;
    for i in 0..inst.num_objects() {
        let group = match group_value(inst, i) {
            Some(Value::String(s)) => s,
            Some(v) => v.to_string(),
            None => String::new(),
        };
        let mut row = vec![inst.object_name(i), group, inst.prior[i].to_string()];
        row.extend(inst.responses[i].iter().map(|&b| if b { "1" } else { "0" }.to_owned()));
        wtr.write_record(&row)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads an instance, choosing the format by extension (`.csv` or JSON).
pub fn read_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let path = path.as_ref();
    if is_csv(path) {
        instance_from_csv(fs::File::open(path)?)
    } else {
        instance_from_json(&fs::read_to_string(path)?)
    }
}

pub fn write_instance(path: impl AsRef<Path>, inst: &ProblemInstance) -> Result<()> {
    let path = path.as_ref();
    let text = if is_csv(path) { instance_to_csv(inst)? } else { instance_to_json(inst) };
    fs::write(path, text)?;
    Ok(())
}

//! Dataset CSV format.
//!
//! The header names the columns `x_1..x_P`, then either `y_1..y_Q` or a
//! single `y_class`, then an optional `label` column. Floats are written in
//! shortest round-trip form, so reading back is lossless.

use crate::error::{Error, Result};
use crate::sample::{Dataset, Sample, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Response {
    Continuous(usize),
    Class,
}

struct Layout {
    p: usize,
    response: Response,
    label: bool,
}

fn parse_header(fields: &csv::StringRecord) -> Result<Layout> {
    let names: Vec<&str> = fields.iter().map(str::trim).collect();
    let mut i = 0;
    while i < names.len() && names[i] == format!("x_{}", i + 1) {
        i += 1;
    }
    let p = i;
    if p == 0 {
        return Err(Error::Parse("header must start with x_1".into()));
    }
    let response = if names.get(i) == Some(&"y_class") {
        i += 1;
        Response::Class
    } else {
        let mut q = 0;
        while i < names.len() && names[i] == format!("y_{}", q + 1) {
            q += 1;
            i += 1;
        }
        if q == 0 {
            return Err(Error::Parse("header needs y_1.. or y_class after the covariates".into()));
        }
        Response::Continuous(q)
    };
    let label = names.get(i) == Some(&"label");
    if label {
        i += 1;
    }
    if i != names.len() {
        return Err(Error::Parse(format!("unexpected header column '{}'", names[i])));
    }
    Ok(Layout { p, response, label })
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite value '{s}'")));
    }
    Ok(v)
}

fn parse_index(s: &str, line: usize, what: &str) -> Result<usize> {
    let v: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: {what} '{s}' is not a positive integer")))?;
    if v == 0 {
        return Err(Error::Parse(format!("line {line}: {what} must be at least 1")));
    }
    Ok(v)
}

/// Parses a dataset from CSV bytes.
pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let layout = parse_header(&header)?;
    let width = header.len();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != width {
            return Err(Error::Parse(format!("line {line}: expected {width} fields, got {}", rec.len())));
        }
        let x = (0..layout.p).map(|j| parse_f64(&rec[j], line)).collect::<Result<Vec<_>>>()?;
        let mut col = layout.p;
        let y = match layout.response {
            Response::Continuous(q) => {
                let y = (col..col + q).map(|j| parse_f64(&rec[j], line)).collect::<Result<Vec<_>>>()?;
                col += q;
                Target::Continuous(y)
            }
            Response::Class => {
                let c = parse_index(&rec[col], line, "class")?;
                col += 1;
                Target::Class(c)
            }
        };
        if layout.label {
            labels.push(parse_index(&rec[col], line, "label")?);
        }
        samples.push(Sample { x, y });
    }
    Ok(Dataset {
        samples,
        labels: layout.label.then_some(labels),
    })
}

/// Serializes a dataset; all samples must share one shape.
pub fn write_dataset(data: &Dataset) -> Result<String> {
    let first = data
        .samples
        .first()
        .ok_or_else(|| Error::arg("cannot write an empty dataset"))?;
    let p = first.x.len();
    let mut header: Vec<String> = (1..=p).map(|i| format!("x_{i}")).collect();
    let response = match &first.y {
        Target::Continuous(y) => {
            header.extend((1..=y.len()).map(|i| format!("y_{i}")));
            Response::Continuous(y.len())
        }
        Target::Class(_) => {
            header.push("y_class".into());
            Response::Class
        }
    };
    if let Some(l) = &data.labels {
        if l.len() != data.samples.len() {
            return Err(Error::shape("label count differs from sample count"));
        }
        header.push("label".into());
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    for (i, z) in data.samples.iter().enumerate() {
        if z.x.len() != p {
            return Err(Error::shape(format!("sample {i} has {} covariates, expected {p}", z.x.len())));
        }
        let mut rec: Vec<String> = z.x.iter().map(|v| v.to_string()).collect();
        match (&z.y, response) {
            (Target::Continuous(y), Response::Continuous(q)) if y.len() == q => rec.extend(y.iter().map(|v| v.to_string())),
            (Target::Class(c), Response::Class) => rec.push(c.to_string()),
            _ => return Err(Error::shape(format!("sample {i} has a different response shape"))),
        }
        if let Some(l) = &data.labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuous_round_trip() {
        let data = Dataset {
            samples: vec![
                Sample::continuous(vec![0.1, -1.0 / 3.0], vec![2.5e-17]),
                Sample::continuous(vec![1e300, 0.0], vec![-7.0]),
            ],
            labels: Some(vec![1, 2]),
        };
        let text = write_dataset(&data).unwrap();
        assert!(text.starts_with("x_1,x_2,y_1,label\n"));
        assert_eq!(parse_dataset(text.as_bytes()).unwrap(), data);
    }

    #[test]
    fn class_round_trip() {
        let data = Dataset::new(vec![Sample::class(vec![0.5], 2), Sample::class(vec![-0.5], 1)]);
        let text = write_dataset(&data).unwrap();
        assert!(text.starts_with("x_1,y_class\n"));
        assert_eq!(parse_dataset(text.as_bytes()).unwrap(), data);
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "y_1\n1\n",
            "x_1\n1\n",
            "x_1,y_1\n1\n",
            "x_1,y_1\nfoo,1\n",
            "x_1,y_1\nNaN,1\n",
            "x_1,y_class\n1,0\n",
            "x_1,y_1,extra\n1,2,3\n",
            "x_2,y_1\n1,2\n",
        ] {
            assert!(parse_dataset(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }
}

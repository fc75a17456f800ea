//! CSV artifacts. Reals are written as `{:.16e}` (17 significant digits), so
//! every value reads back bit-exactly.

use std::io::{Read, Write};

use super::{EvalError, EvalRecord, Histogram, Method, RankAverage};

pub const RECORD_HEADER: [&str; 5] = ["frame_index", "rank", "method", "scaled_loss", "wall_time_ns"];
pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_left", "bin_right", "count"];
const AVERAGE_HEADER: [&str; 4] = ["rank", "method", "mean_scaled_loss", "count"];

fn csv_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Csv(e.to_string())
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T, EvalError> {
    rec.get(i)
        .ok_or_else(|| EvalError::Csv(format!("missing column {what}")))?
        .parse()
        .map_err(|_| EvalError::Csv(format!("bad {what} `{}`", &rec[i])))
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), EvalError> {
    let header = reader.headers().map_err(csv_err)?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(EvalError::Csv(format!("unexpected header {header:?}")));
    }
    Ok(())
}

pub fn write_records<W: Write>(out: W, records: &[EvalRecord]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.frame_index.to_string(),
            r.rank.to_string(),
            r.method.to_string(),
            real(r.scaled_loss),
            r.wall_time_ns.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<EvalRecord>, EvalError> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &RECORD_HEADER)?;
    reader
        .records()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(EvalRecord::new(
                field(&row, 0, "frame_index")?,
                field(&row, 1, "rank")?,
                field::<Method>(&row, 2, "method")?,
                field(&row, 3, "scaled_loss")?,
                field(&row, 4, "wall_time_ns")?,
            ))
        })
        .collect()
}

pub fn write_histogram<W: Write>(out: W, hist: &Histogram) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTOGRAM_HEADER).map_err(csv_err)?;
    for (i, c) in hist.counts.iter().enumerate() {
        w.write_record([real(hist.edges[i]), real(hist.edges[i + 1]), c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram<R: Read>(input: R) -> Result<Histogram, EvalError> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &HISTOGRAM_HEADER)?;
    let mut edges = Vec::new();
    let mut counts = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let left: f64 = field(&row, 0, "bin_left")?;
        if edges.is_empty() {
            edges.push(left);
        }
        edges.push(field(&row, 1, "bin_right")?);
        counts.push(field(&row, 2, "count")?);
    }
    Ok(Histogram { edges, counts })
}

pub fn write_rank_averages<W: Write>(out: W, averages: &[RankAverage]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AVERAGE_HEADER).map_err(csv_err)?;
    for a in averages {
        w.write_record([a.rank.to_string(), a.method.to_string(), real(a.mean_loss), a.count.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_header() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[EvalRecord::new(3, 12, Method::CalcSigma, 0.125, 77)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "frame_index,rank,method,scaled_loss,wall_time_ns\n3,12,calc_sigma,1.2500000000000000e-1,77\n"
        );
    }

    #[test]
    fn histogram_round_trip() {
        let h = Histogram {
            edges: vec![0.0, 0.1, 0.30000000000000004],
            counts: vec![4, 1],
        };
        let mut buf = Vec::new();
        write_histogram(&mut buf, &h).unwrap();
        assert!(buf.starts_with(b"bin_left,bin_right,count\n"));
        assert_eq!(read_histogram(buf.as_slice()).unwrap(), h);
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(read_records("a,b,c\n1,2,3\n".as_bytes()).is_err());
        assert!(read_records("frame_index,rank,method,scaled_loss,wall_time_ns\n1,2,svd,0.1,3\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn records_round_trip_bit_exactly(
            rows in prop::collection::vec((0usize..100_000, 1usize..64, 0usize..6, any::<f64>(), any::<u64>()), 0..40)
        ) {
            let records: Vec<EvalRecord> = rows
                .into_iter()
                .filter(|r| r.3.is_finite())
                .map(|(f, r, m, l, t)| EvalRecord::new(f, r, Method::ALL[m], l.abs(), t))
                .collect();
            let mut buf = Vec::new();
            write_records(&mut buf, &records).unwrap();
            let back = read_records(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), records.len());
            for (a, b) in back.iter().zip(&records) {
                prop_assert_eq!(a.scaled_loss.to_bits(), b.scaled_loss.to_bits());
                prop_assert_eq!(a, b);
            }
        }
    }
}

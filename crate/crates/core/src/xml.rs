//! XML interchange for ten-second records.
//!
//! ```xml
//! <?xml version="1.0" encoding="UTF-8"?>
//! <ecgRecord sps="500" duration_ms="10000" rr_interval_ms="800">
//!   <metadata>
//!     <age>50</age>
//!     <sex>Male</sex>
//!     <targetCategory>LBBB</targetCategory>
//!   </metadata>
//!   <lead name="I">12 15 -3 ...</lead>
//!   ... eleven more leads, I II III aVR aVL aVF V1..V6
//! </ecgRecord>
//! ```
//!
//! Amplitudes are integer microvolts, rounded half away from zero. `age`
//! and `targetCategory` are optional.

use quick_xml::events::{BytesDecl, BytesText, Event};
use quick_xml::{Reader, Writer};
use thiserror::Error;

use crate::beat::{BeatError, Category, Lead, Record10s, Sex, RECORD_SAMPLES, RR_INTERVAL_MS, SPS};

const DURATION_MS: usize = RECORD_SAMPLES * 1000 / SPS;

#[derive(Debug, Error)]
pub enum XmlError {
    #[error("xml syntax: {0}")]
    Syntax(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Beat(#[from] BeatError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct XmlMetadata {
    pub age_years: Option<f64>,
    pub sex: Sex,
    pub target: Option<Category>,
}

/// Millivolts to integer microvolts, halves rounded away from zero.
pub fn to_microvolts(mv: f64) -> i64 {
    (mv * 1000.0).round() as i64
}

pub fn export_xml(record: &Record10s, meta: &XmlMetadata) -> String {
    let mut w = Writer::new_with_indent(Vec::new(), b' ', 2);
    let io = "writing to memory cannot fail";
    w.write_event(Event::Decl(BytesDecl::new("1.0", Some("UTF-8"), None))).expect(io);
    let sps = SPS.to_string();
    let dur = DURATION_MS.to_string();
    let rr = format!("{RR_INTERVAL_MS}");
    w.create_element("ecgRecord")
        .with_attributes([("sps", sps.as_str()), ("duration_ms", dur.as_str()), ("rr_interval_ms", rr.as_str())])
        .write_inner_content(|w| {
            w.create_element("metadata").write_inner_content(|w| {
                if let Some(age) = meta.age_years {
                    w.create_element("age").write_text_content(BytesText::new(&format!("{age}")))?;
                }
                w.create_element("sex").write_text_content(BytesText::new(&meta.sex.to_string()))?;
                if let Some(c) = meta.target {
                    w.create_element("targetCategory").write_text_content(BytesText::new(c.as_str()))?;
                }
                Ok(())
            })?;
            for lead in Lead::TWELVE {
                let tokens: Vec<String> = record.lead(lead).iter().map(|&v| to_microvolts(v).to_string()).collect();
                w.create_element("lead")
                    .with_attribute(("name", lead.name()))
                    .write_text_content(BytesText::new(&tokens.join(" ")))?;
            }
            Ok(())
        })
        .expect(io);
    let mut out = String::from_utf8(w.into_inner()).expect("utf8");
    out.push('\n');
    out
}

fn schema(msg: impl Into<String>) -> XmlError {
    XmlError::Schema(msg.into())
}

pub fn import_xml(text: &str) -> Result<(Record10s, XmlMetadata), XmlError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let syntax = |e: quick_xml::Error| XmlError::Syntax(e.to_string());

    let mut meta = XmlMetadata::default();
    let mut leads: [Option<Vec<f64>>; 12] = Default::default();
    let mut stack: Vec<String> = Vec::new();
    let mut current_lead: Option<Lead> = None;
    let mut saw_root = false;

    loop {
        match reader.read_event().map_err(syntax)? {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let attr = |key: &str| -> Result<Option<String>, XmlError> {
                    for a in e.attributes() {
                        let a = a.map_err(|err| XmlError::Syntax(err.to_string()))?;
                        if a.key.as_ref() == key.as_bytes() {
                            return Ok(Some(a.unescape_value().map_err(syntax)?.into_owned()));
                        }
                    }
                    Ok(None)
                };
                match (stack.len(), name.as_str()) {
                    (0, "ecgRecord") => {
                        saw_root = true;
                        for (key, want) in [("sps", SPS.to_string()), ("duration_ms", DURATION_MS.to_string())] {
                            match attr(key)? {
                                Some(v) if v == want => {}
                                other => return Err(schema(format!("{key} must be {want}, found {other:?}"))),
                            }
                        }
                    }
                    (1, "lead") => {
                        let n = attr("name")?.ok_or_else(|| schema("lead without name"))?;
                        let lead: Lead = n.parse().map_err(|_| schema(format!("unknown lead {n:?}")))?;
                        if leads[lead.twelve_index()].is_some() {
                            return Err(schema(format!("lead {n} repeated")));
                        }
                        current_lead = Some(lead);
                    }
                    (1, "metadata") | (2, "age" | "sex" | "targetCategory") => {}
                    _ => return Err(schema(format!("unexpected element <{name}>"))),
                }
                stack.push(name);
            }
            Event::End(_) => {
                if stack.pop().as_deref() == Some("lead") {
                    let lead = current_lead.take().expect("inside lead");
                    leads[lead.twelve_index()].get_or_insert_with(Vec::new);
                }
            }
            Event::Empty(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                return Err(schema(format!("empty element <{name}>")));
            }
            Event::Text(t) => {
                let body = t.decode().map_err(|e| XmlError::Syntax(e.to_string()))?;
                match stack.last().map(String::as_str) {
                    Some("lead") => {
                        let lead = current_lead.expect("inside lead");
                        let values = body
                            .split_ascii_whitespace()
                            .map(|tok| tok.parse::<i64>().map(|uv| uv as f64 / 1000.0))
                            .collect::<Result<Vec<f64>, _>>()
                            .map_err(|_| schema(format!("non-integer sample in lead {}", lead.name())))?;
                        leads[lead.twelve_index()] = Some(values);
                    }
                    Some("age") => {
                        meta.age_years = Some(body.trim().parse().map_err(|_| schema(format!("bad age {body:?}")))?)
                    }
                    Some("sex") => meta.sex = body.parse().map_err(schema)?,
                    Some("targetCategory") => meta.target = Some(body.parse().map_err(schema)?),
                    _ => return Err(schema(format!("unexpected text {body:?}"))),
                }
            }
            Event::Eof => break,
            Event::Decl(_) | Event::Comment(_) => {}
            other => return Err(schema(format!("unsupported content {other:?}"))),
        }
    }
    if !saw_root {
        return Err(schema("missing <ecgRecord>"));
    }
    let mut data = vec![0.0; RECORD_SAMPLES * 12];
    for lead in Lead::TWELVE {
        let values = leads[lead.twelve_index()]
            .as_ref()
            .ok_or_else(|| schema(format!("lead {} missing", lead.name())))?;
        if values.len() != RECORD_SAMPLES {
            return Err(schema(format!(
                "lead {} has {} samples, expected {RECORD_SAMPLES}",
                lead.name(),
                values.len()
            )));
        }
        for (t, &v) in values.iter().enumerate() {
            data[t * 12 + lead.twelve_index()] = v;
        }
    }
    Ok((Record10s::new(data)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beat::{derive_limb_leads, stitch_record, BeatMatrix};

    fn record() -> Record10s {
        let mut b = BeatMatrix::zeros();
        for t in 0..400 {
            for l in 0..8 {
                b.set(t, l, ((t * 7 + l * 13) as f64 * 0.01).sin() * 1.3);
            }
        }
        stitch_record(&derive_limb_leads(&b))
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(to_microvolts(0.123456), 123);
        assert_eq!(to_microvolts(0.0125), 13);
        assert_eq!(to_microvolts(-0.0125), -13);
        assert_eq!(to_microvolts(-0.0004), 0);
    }

    #[test]
    fn round_trip_within_quantisation() {
        let r = record();
        let meta = XmlMetadata {
            age_years: Some(61.0),
            sex: Sex::Female,
            target: Some(Category::Lbbb),
        };
        let text = export_xml(&r, &meta);
        let (back, m) = import_xml(&text).unwrap();
        assert_eq!(m, meta);
        for (a, b) in r.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= 0.0005 + 1e-12);
        }
        assert_eq!(export_xml(&back, &m), text);
    }

    #[test]
    fn leads_in_fixed_order() {
        let text = export_xml(&record(), &XmlMetadata::default());
        let names: Vec<&str> = text
            .match_indices("<lead name=\"")
            .map(|(i, _)| {
                let rest = &text[i + 12..];
                &rest[..rest.find('"').unwrap()]
            })
            .collect();
        assert_eq!(names, ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"]);
        assert!(text.contains("<ecgRecord sps=\"500\" duration_ms=\"10000\" rr_interval_ms=\"800\">"));
        assert!(!text.contains("<age>"));
    }

    #[test]
    fn schema_violations() {
        let text = export_xml(&record(), &XmlMetadata::default());
        assert!(matches!(import_xml(&text.replace("sps=\"500\"", "sps=\"250\"")), Err(XmlError::Schema(_))));
        let one_lead_gone = {
            let start = text.find("<lead name=\"V6\"").unwrap();
            let end = text[start..].find("</lead>").unwrap() + start + 7;
            format!("{}{}", &text[..start], &text[end..])
        };
        assert!(matches!(import_xml(&one_lead_gone), Err(XmlError::Schema(_))));
        assert!(import_xml("<ecgRecord").is_err());
        assert!(import_xml(&text.replacen("<lead name=\"I\">", "<lead name=\"I\">x ", 1)).is_err());
    }
}

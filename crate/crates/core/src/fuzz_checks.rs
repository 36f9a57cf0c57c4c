//! Parser checks shared by the fuzz targets and the corpus regression test.
//! Each takes raw bytes, must never panic on bad input, and panics only when
//! an accepted input fails to round-trip.

use crate::data::{read_csv, LoadOptions};
use crate::elicitation::{ResponsePayload, Session};
use crate::similarity::WeightVector;
use crate::training::ConstrainedModel;
use crate::{fixtures, generate_synthetic, Dataset, FeatureSchema, SyntheticConfig};

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn schema_json(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(schema) = FeatureSchema::from_json(t) {
        let again = FeatureSchema::from_json(&schema.to_json()).expect("serialized schema parses");
        assert_eq!(again, schema);
    }
}

pub fn dataset_csv(data: &[u8]) {
    if let Ok(ds) = read_csv(fixtures::schema(), data, LoadOptions::default()) {
        let again = read_csv(ds.schema().clone(), ds.to_csv().as_bytes(), LoadOptions::default())
            .expect("written csv parses");
        assert_eq!(again, ds);
    }
}

pub fn dataset_json(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(ds) = Dataset::from_json(t) {
        let json = ds.to_json();
        let again = Dataset::from_json(&json).expect("serialized dataset parses");
        assert_eq!(again, ds);
        assert_eq!(again.to_json(), json);
    }
}

pub fn session_log(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(s) = Session::import(t) {
        let log = s.export();
        let again = Session::import(&log).expect("exported log imports");
        assert_eq!(again, s);
        assert_eq!(again.export(), log);
    }
}

pub fn response_payload(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(p) = ResponsePayload::from_json(t) {
        let json = serde_json::to_string(&p).expect("payload serializes");
        assert_eq!(ResponsePayload::from_json(&json).expect("payload parses"), p);
    }
}

pub fn weights_param(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(w) = WeightVector::parse_list(t) {
        assert!(w.as_slice().iter().all(|x| x.is_finite() && *x >= 0.0));
        let list: Vec<String> = w.as_slice().iter().map(f64::to_string).collect();
        assert_eq!(WeightVector::parse_list(&list.join(",")).expect("list parses"), w);
    }
}

pub fn model_json(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(model) = ConstrainedModel::from_json(t) {
        let again = ConstrainedModel::from_json(&model.to_json()).expect("serialized model parses");
        assert_eq!(again, model);
        if let Ok(ds) = generate_synthetic(&model.schema, &SyntheticConfig::new(8, 0)) {
            if let Ok(scores) = model.scores(&ds) {
                assert!(scores.iter().all(|s| (0.0..=1.0).contains(s) || s.is_nan()));
            }
        }
    }
}

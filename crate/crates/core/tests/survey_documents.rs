use std::fs;

use balancelab::documents::{survey_report, Outcome, SurveyReport};
use balancelab::survey::{SurveyDataset, SurveyError};

const TABLE: &str = "\
participant,d1,d2,s1,s2,nerf,buff,coder_a,coder_b
p1,7,6,2,3,ranger/soulbeast/dd;mesmer//dd,,x,x
p2,6,7,3,NA,ranger/soulbeast/dd,guardian/firebrand/fs,y,y
p3,5,5,4,4,,mesmer//dd,x,y
p4,7,7,1,2,ranger/soulbeast/dd,,,
p5,4,5,5,5,mesmer//dd,guardian/firebrand/fs,y,y
";

fn load() -> SurveyDataset {
    let dir = tempfile::tempdir().unwrap();
    let (data, scales) = (dir.path().join("s.csv"), dir.path().join("scales.toml"));
    fs::write(&data, TABLE).unwrap();
    fs::write(&scales, "difficulty = [\"d1\", \"d2\"]\nsymmetry = [\"s1\", \"s2\"]\n").unwrap();
    SurveyDataset::load(&data, &scales).unwrap()
}

#[test]
fn report_sections() {
    let ds = load();
    let r = survey_report(&ds, None, Default::default()).unwrap();
    assert_eq!(r.participants, 5);
    assert_eq!(r.sample_sizing.required, Outcome::Value(385));
    assert_eq!(r.items.len(), 4);
    let s2 = r.items.iter().find(|i| i.item == "s2").unwrap();
    assert_eq!(s2.summary.value().unwrap().n, 4);
    assert_eq!(r.votes.nerf[0].build, "ranger/soulbeast/dd");
    assert_eq!(r.votes.nerf[0].participants, 3);
    // p4 has no labels, so kappa runs over the other four units.
    assert!(r.fleiss_kappa.as_ref().unwrap().value().is_some());
    assert!(r.discriminant_validity.value().is_some());
    assert_eq!(SurveyReport::parse(&r.render()).unwrap(), r);
}

#[test]
fn bad_inputs() {
    let scales = [("a".to_string(), vec!["q1".to_string()])].into();
    assert!(matches!(
        SurveyDataset::parse("q1,extra\n3,4\n", scales),
        Err(SurveyError::Input(_))
    ));
    let scales = [("a".to_string(), vec!["q1".to_string()])].into();
    assert!(SurveyDataset::parse("q1\n9\n", scales).is_err());
}

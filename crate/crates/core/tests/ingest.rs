use d2dlab::ingest::{dedup_unique, filter_region, parse_log, to_empirical, IngestReport};

// Region 7: content "a" reached by 3 users (one of them twice), "b" by 2,
// "c" by 1. Region 8 contributes one more user of "c". One broken row.
const LOG: &str = "\
user_id,content_id,region_id,timestamp
u1,a,7,10
u2,a,7,11
u1,a,7,12
u3,a,7,13
u1,b,7,14
u4,b,7,15
u2,c,7,16
u9,c,8,17
u5,,7,18
";

#[test]
fn fixture_ground_truth() {
    let parsed = parse_log(LOG.as_bytes()).unwrap();
    assert_eq!(parsed.report.rows, 9);
    assert_eq!(parsed.report.malformed, 1);

    let all = dedup_unique(&parsed.records);
    assert_eq!(all.len(), 7);
    assert_eq!(all.per_content_counts()["c"], 2);

    let region = filter_region(parsed.records.clone(), 7);
    let unique = dedup_unique(&region);
    let report = IngestReport::new(parsed.report, &unique);
    assert_eq!(report.unique_accesses, 6);
    assert_eq!(report.distinct_users, 4);
    assert_eq!(report.distinct_contents, 3);

    let ranked = to_empirical(&unique).unwrap();
    assert_eq!(ranked.distribution.counts(), &[3, 2, 1]);
    assert_eq!(ranked.content_ids, ["a", "b", "c"]);
    let pmf = ranked.distribution.pmf();
    assert!((pmf[0] - 0.5).abs() < 1e-15);
}

#[test]
fn tolerates_whitespace_and_missing_timestamp_column() {
    let parsed = parse_log(" user_id , content_id , region_id \n u1 , x , 1 \n".as_bytes()).unwrap();
    assert_eq!(parsed.records.len(), 1);
    assert_eq!(parsed.records[0].user_id, "u1");
    assert_eq!(parsed.records[0].timestamp, None);
}

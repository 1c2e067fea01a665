mod common;

use std::time::Duration;

use balancelab::ingest::{fetch_paginated, FetchConfig, FetchError};
use balancelab::stub_server::StubServer;

fn records(n: usize) -> Vec<serde_json::Value> {
    (0..n).map(|i| serde_json::to_value(common::simple(i)).unwrap()).collect()
}

fn fast(page_size: usize) -> FetchConfig {
    FetchConfig {
        page_size,
        initial_backoff: Duration::from_millis(1),
        max_backoff: Duration::from_millis(4),
        timeout: Duration::from_secs(5),
        ..FetchConfig::default()
    }
}

#[test]
fn two_full_pages_and_a_short_one() {
    let server = StubServer::start(records(7)).unwrap();
    let mut stream = fetch_paginated(&server.endpoint(), fast(3)).unwrap();
    let logs: Vec<_> = stream.by_ref().collect::<Result<_, _>>().unwrap();
    let ids: Vec<_> = logs.iter().map(|l| l.log_id.clone()).collect();
    assert_eq!(ids, (0..7).map(|i| format!("log-{i}")).collect::<Vec<_>>());
    assert_eq!(stream.requests(), 3);
    let pages: Vec<_> = server.requests().iter().map(|r| r.param("page").unwrap().to_string()).collect();
    assert_eq!(pages, ["1", "2", "3"]);
    assert!(server.requests().iter().all(|r| r.param("page_size") == Some("3")));
}

#[test]
fn exact_multiple_ends_on_empty_page() {
    let server = StubServer::start(records(6)).unwrap();
    let mut stream = fetch_paginated(&server.endpoint(), fast(3)).unwrap();
    assert_eq!(stream.by_ref().count(), 6);
    assert_eq!(stream.requests(), 3);
}

#[test]
fn empty_first_page() {
    let server = StubServer::start(Vec::new()).unwrap();
    let mut stream = fetch_paginated(&server.endpoint(), fast(10)).unwrap();
    assert!(stream.next().is_none());
    assert_eq!(stream.requests(), 1);
}

#[test]
fn server_errors_exhaust_retries() {
    let server = StubServer::start(records(2)).unwrap();
    server.fail_next(&[500, 500, 500]);
    let mut stream = fetch_paginated(&server.endpoint(), fast(5)).unwrap();
    match stream.next() {
        Some(Err(FetchError::Network { attempts, .. })) => assert_eq!(attempts, 3),
        other => panic!("expected network error, got {other:?}"),
    }
    assert!(stream.next().is_none());
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn transient_errors_recover() {
    let server = StubServer::start(records(4)).unwrap();
    server.fail_next(&[503, 429]);
    let logs: Vec<_> = fetch_paginated(&server.endpoint(), fast(10))
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(logs.len(), 4);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn auth_failure_is_not_retried() {
    let server = StubServer::start(records(2)).unwrap();
    server.require_token("sesame");
    let mut stream = fetch_paginated(&server.endpoint(), fast(5)).unwrap();
    assert!(matches!(stream.next(), Some(Err(FetchError::Auth(401)))));
    assert_eq!(server.requests().len(), 1);

    let config = FetchConfig {
        bearer_token: Some("sesame".into()),
        ..fast(5)
    };
    let logs: Vec<_> = fetch_paginated(&server.endpoint(), config).unwrap().collect::<Result<_, _>>().unwrap();
    assert_eq!(logs.len(), 2);
    assert_eq!(server.requests().last().unwrap().authorization.as_deref(), Some("Bearer sesame"));
}

#[test]
fn invalid_items_and_other_eras_are_skipped() {
    let mut recs = records(3);
    recs.insert(1, serde_json::json!({"log_id": "broken"}));
    let mut other = common::simple(9);
    other.patch_era = "summer".into();
    recs.push(serde_json::to_value(other).unwrap());
    let server = StubServer::start(recs).unwrap();
    let config = FetchConfig {
        era_filter: Some("spring".into()),
        ..fast(10)
    };
    let mut stream = fetch_paginated(&server.endpoint(), config).unwrap();
    let logs: Vec<_> = stream.by_ref().collect::<Result<_, _>>().unwrap();
    assert_eq!(logs.len(), 3);
    assert_eq!(stream.skipped(), 2);
}

#[test]
fn page_size_bounds() {
    assert!(matches!(fetch_paginated("http://127.0.0.1:1/logs", fast(0)), Err(FetchError::BadPageSize(0))));
    assert!(fetch_paginated("http://127.0.0.1:1/logs", fast(1001)).is_err());
}

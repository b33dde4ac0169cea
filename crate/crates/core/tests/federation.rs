mod common;

use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use fedxgb::federation::{
    channel_links, run_in_process, transport::Flow, Aggregator, AggregatorLink, Envelope,
    FederationMessage, Party, PartyLink, RecordingLink, TcpAggregatorLink, TcpPartyLink,
};
use fedxgb::{train_centralized, DatasetMatrix, Error, Hyperparameters, Task, TreeModel};

use common::{random_split, synthetic};

const TIMEOUT: Duration = Duration::from_secs(30);

fn params(rounds: usize) -> Hyperparameters {
    Hyperparameters {
        rounds,
        max_depth: 4,
        max_bins: 32,
        ..Hyperparameters::default()
    }
}

fn numbered(parts: Vec<DatasetMatrix>) -> Vec<(u32, DatasetMatrix)> {
    parts
        .into_iter()
        .enumerate()
        .map(|(i, d)| (i as u32 + 1, d))
        .collect()
}

/// Runs parties on threads and returns the aggregator's model together with
/// every party's final copy.
fn run_collecting(parts: Vec<DatasetMatrix>, p: &Hyperparameters) -> (TreeModel, Vec<TreeModel>) {
    let parties = numbered(parts);
    let ids: Vec<u32> = parties.iter().map(|(id, _)| *id).collect();
    let (link, links) = channel_links(&ids);
    thread::scope(|s| {
        let handles: Vec<_> = parties
            .into_iter()
            .zip(links)
            .map(|((id, data), mut link)| s.spawn(move || Party::new(id, data).run(&mut link)))
            .collect();
        let mut agg = Aggregator::new(link, p.clone()).with_timeout(TIMEOUT);
        let outcome = agg.run().unwrap();
        let copies = handles
            .into_iter()
            .map(|h| h.join().unwrap().unwrap())
            .collect();
        (outcome.model, copies)
    })
}

#[test]
fn single_party_matches_centralized_bytes() {
    for (task, seed) in [(Task::Binary, 1), (Task::Multiclass(3), 2)] {
        let data = synthetic(600, 5, task, 0.05, seed);
        let p = params(8);
        let central = train_centralized(&data, &p).unwrap();
        let federated = run_in_process(vec![(1, data)], &p, TIMEOUT).unwrap();
        assert_eq!(federated.model.to_json(), central.model.to_json());
        assert_eq!(federated.candidates, central.candidates);
        assert_eq!(federated.log, central.log);
    }
}

#[test]
fn parties_end_with_the_aggregator_model() {
    let data = synthetic(900, 4, Task::Binary, 0.0, 3);
    let (model, copies) = run_collecting(random_split(&data, 5, 4), &params(5));
    assert_eq!(copies.len(), 5);
    for copy in copies {
        assert_eq!(copy.to_json(), model.to_json());
    }
}

#[test]
fn base_score_is_pooled_prevalence() {
    let data = synthetic(1000, 3, Task::Binary, 0.0, 5);
    let positives = data.labels().iter().filter(|&&y| y == 1).count();
    let out = run_in_process(numbered(random_split(&data, 5, 6)), &params(0), TIMEOUT).unwrap();
    let expected = positives as f64 / data.num_rows() as f64;
    assert!((out.model.base_score[0] - expected).abs() < 1e-12);
    assert!(out.model.trees.is_empty());
}

#[test]
fn zero_rounds_gives_null_model() {
    let data = synthetic(300, 3, Task::Multiclass(4), 0.0, 7);
    let out = run_in_process(numbered(random_split(&data, 3, 8)), &params(0), TIMEOUT).unwrap();
    let hist = data.label_histogram();
    let n = data.num_rows() as f64;
    assert!(out.model.trees.is_empty());
    for (k, &c) in hist.iter().enumerate() {
        assert!((out.model.base_score[k] - c as f64 / n).abs() < 1e-12);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let data = synthetic(800, 6, Task::Multiclass(3), 0.02, 9);
    let run = || {
        run_in_process(numbered(random_split(&data, 5, 10)), &params(6), TIMEOUT)
            .unwrap()
            .model
            .to_json()
    };
    assert_eq!(run(), run());
}

#[test]
fn federated_loss_decreases() {
    let data = synthetic(1500, 5, Task::Binary, 0.0, 11);
    let out = run_in_process(numbered(random_split(&data, 5, 12)), &params(20), TIMEOUT).unwrap();
    for w in out.log.windows(2) {
        assert!(w[1].train_loss <= w[0].train_loss + 1e-9);
    }
}

#[test]
fn tcp_matches_in_process() {
    let data = synthetic(700, 4, Task::Binary, 0.03, 13);
    let parts = numbered(random_split(&data, 3, 14));
    let p = params(4);
    let expected = run_in_process(parts.clone(), &p, TIMEOUT).unwrap().model;

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handles: Vec<_> = parts
        .into_iter()
        .map(|(id, d)| {
            thread::spawn(move || {
                let mut link = TcpPartyLink::connect(addr, id, TIMEOUT).unwrap();
                Party::new(id, d).run(&mut link).unwrap()
            })
        })
        .collect();
    let link = TcpAggregatorLink::accept(listener, &[1, 2, 3], TIMEOUT).unwrap();
    let mut agg = Aggregator::new(link, p).with_timeout(TIMEOUT);
    let model = agg.run().unwrap().model;
    assert_eq!(model.to_json(), expected.to_json());
    for h in handles {
        assert_eq!(h.join().unwrap().to_json(), expected.to_json());
    }
}

/// Distinctive values that would show up verbatim if rows crossed the wire.
#[test]
fn transcripts_carry_no_raw_rows() {
    let n = 400;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            vec![
                1000.123_456_7 + i as f64 * 1.000_173_917,
                -77.031_2 - i as f64 * 0.003_141_592_653,
            ]
        })
        .collect();
    let labels: Vec<u32> = (0..n).map(|i| u32::from(i % 3 == 0)).collect();
    let data = DatasetMatrix::from_rows(&rows, labels.clone(), Task::Binary).unwrap();
    let parts = numbered(random_split(&data, 4, 15));
    let ids: Vec<u32> = parts.iter().map(|(id, _)| *id).collect();
    let (link, links) = channel_links(&ids);
    let link = RecordingLink::new(link);
    let transcript = link.transcript();
    thread::scope(|s| {
        for ((id, d), mut l) in parts.into_iter().zip(links) {
            s.spawn(move || Party::new(id, d).run(&mut l).unwrap());
        }
        Aggregator::new(link, params(3))
            .with_timeout(TIMEOUT)
            .run()
            .unwrap();
    });

    let frames = transcript.lock().unwrap();
    assert!(frames.iter().any(|(f, _)| matches!(f, Flow::FromParty(_))));
    let text: Vec<String> = frames
        .iter()
        .map(|(_, bytes)| String::from_utf8(bytes.clone()).unwrap())
        .collect();
    for row in &rows {
        for v in row {
            let needle = v.to_string();
            assert!(
                text.iter().all(|t| !t.contains(&needle)),
                "raw value {needle} crossed the wire"
            );
        }
    }
    let label_list = serde_json::to_string(&labels).unwrap();
    assert!(text.iter().all(|t| !t.contains(&label_list[..40])));
    for t in &text {
        let env: Envelope = serde_json::from_str(t).unwrap();
        assert!(!matches!(env.message, FederationMessage::Register));
    }
}

#[test]
fn silent_party_times_out_by_id() {
    let data = synthetic(200, 3, Task::Binary, 0.0, 16);
    let (link, mut links) = channel_links(&[1, 2]);
    let silent = links.pop().unwrap();
    let mut active = links.pop().unwrap();
    let worker = thread::spawn(move || Party::new(1, data).run(&mut active));
    let mut agg = Aggregator::new(link, params(2)).with_timeout(Duration::from_millis(200));
    match agg.run() {
        Err(Error::Timeout { party, .. }) => assert_eq!(party, 2),
        other => panic!("expected timeout, got {other:?}"),
    }
    assert!(agg.last_good_model().is_none());
    drop(agg);
    drop(silent);
    assert!(worker.join().unwrap().is_err());
}

#[test]
fn feature_count_mismatch_is_schema_error() {
    let a = synthetic(200, 3, Task::Binary, 0.0, 17);
    let b = synthetic(200, 4, Task::Binary, 0.0, 18);
    let err = run_in_process(vec![(1, a), (2, b)], &params(2), TIMEOUT).unwrap_err();
    assert!(matches!(err.error, Error::Schema(_)), "{err}");
}

/// Forwards to a real party for the first `budget` exchanges, then goes quiet.
struct FlakyLink<L> {
    inner: L,
    budget: usize,
}

impl<L: PartyLink> PartyLink for FlakyLink<L> {
    fn send(&mut self, envelope: &Envelope) -> fedxgb::Result<()> {
        if self.budget == 0 {
            return Ok(());
        }
        self.budget -= 1;
        self.inner.send(envelope)
    }

    fn recv(&mut self) -> fedxgb::Result<Envelope> {
        self.inner.recv()
    }
}

#[test]
fn failure_keeps_last_acknowledged_model() {
    let data = synthetic(500, 3, Task::Binary, 0.0, 19);
    let parts = numbered(random_split(&data, 2, 20));
    let (link, links) = channel_links(&[1, 2]);
    let p = Hyperparameters {
        max_depth: 2,
        ..params(10)
    };
    thread::scope(|s| {
        let mut budget = Some(12);
        for ((id, d), l) in parts.into_iter().zip(links) {
            let mut l = FlakyLink {
                inner: l,
                budget: if id == 2 {
                    budget.take().unwrap()
                } else {
                    usize::MAX
                },
            };
            s.spawn(move || {
                let _ = Party::new(id, d).run(&mut l);
            });
        }
        let mut agg = Aggregator::new(link, p).with_timeout(Duration::from_millis(300));
        let err = agg.run().unwrap_err();
        assert!(matches!(err, Error::Timeout { party: 2, .. }), "{err}");
        let last = agg
            .last_good_model()
            .expect("some rounds completed")
            .clone();
        assert!(!last.trees.is_empty() && last.trees.len() < 10);
    });
}

#[test]
fn stale_replies_are_ignored() {
    let data = synthetic(300, 3, Task::Binary, 0.0, 21);
    let p = params(3);
    let expected = run_in_process(vec![(1, data.clone())], &p, TIMEOUT)
        .unwrap()
        .model;

    struct Echo<L> {
        inner: L,
    }
    impl<L: PartyLink> PartyLink for Echo<L> {
        fn send(&mut self, envelope: &Envelope) -> fedxgb::Result<()> {
            let mut stale = envelope.clone();
            stale.step = stale.step.wrapping_sub(1);
            stale.message = FederationMessage::Ack;
            self.inner.send(&stale)?;
            self.inner.send(envelope)
        }
        fn recv(&mut self) -> fedxgb::Result<Envelope> {
            self.inner.recv()
        }
    }

    let (link, mut links) = channel_links(&[1]);
    let mut party_link = Echo {
        inner: links.pop().unwrap(),
    };
    let model = thread::scope(|s| {
        s.spawn(move || Party::new(1, data).run(&mut party_link).unwrap());
        Aggregator::new(link, p)
            .with_timeout(TIMEOUT)
            .run()
            .unwrap()
            .model
    });
    assert_eq!(model.to_json(), expected.to_json());
}

#[test]
fn aggregator_link_reports_parties_sorted() {
    let (link, _links) = channel_links(&[5, 2, 9]);
    assert_eq!(link.parties(), vec![2, 5, 9]);
}

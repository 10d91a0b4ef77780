use rkrank_web::{convergence_json, rank_json, track_json};
use serde_json::Value;

#[test]
fn convergence_trace_shrinks_error() {
    let v: Value = serde_json::from_str(&convergence_json(60, 0.3, 50, 0.5, 4, 20_000, 40, false).unwrap()).unwrap();
    let nwe = v["nwe"].as_array().unwrap();
    let its = v["iterations"].as_array().unwrap();
    assert_eq!(nwe.len(), its.len());
    assert_eq!(its.last().unwrap().as_u64(), Some(20_000));
    let first = nwe[0].as_f64().unwrap();
    let last = nwe.last().unwrap().as_f64().unwrap();
    assert!(last < 0.5 * first, "{first} -> {last}");
    assert!(v["rank_centrality_d_w"].as_f64().unwrap() >= 0.0);
}

#[test]
fn convergence_is_reproducible() {
    let a = convergence_json(30, 0.4, 20, 1.0, 9, 3000, 10, true).unwrap();
    let b = convergence_json(30, 0.4, 20, 1.0, 9, 3000, 10, true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rank_pasted_text() {
    let text = "a,b,c,d\nAnn,Bo,7,3\nBo,Cy,6,4\nAnn,Cy,8,2\n";
    for est in ["rk", "rc", "mle"] {
        let v: Value = serde_json::from_str(&rank_json(text, est, 1.0, 0).unwrap()).unwrap();
        let names: Vec<&str> = v["rows"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["name"].as_str().unwrap())
            .collect();
        assert_eq!(names, ["Ann", "Bo", "Cy"], "{est}");
    }
}

#[test]
fn rank_errors_are_messages() {
    let err = rank_json("Ann,Bo,1\n", "rk", 1.0, 0).unwrap_err().to_string();
    assert!(err.contains("line 1") || err.contains(":1"), "{err}");
    assert!(rank_json("Ann,Bo,1,1\n", "nope", 1.0, 0).is_err());
}

#[test]
fn track_trace_has_requested_points() {
    let v: Value = serde_json::from_str(&track_json(20, 0.4, 10, 4000, 0.05, 0.001, 1, 1000).unwrap()).unwrap();
    // event 0 plus one point per report
    assert_eq!(v["points"].as_array().unwrap().len(), 5);
    assert!(v["steady_state"].as_f64().unwrap().is_finite());
}

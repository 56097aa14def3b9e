use dcplp_core::ast::parse_program;
use dcplp_core::infer::{answer_task, InferConfig, Labeler};
use std::time::Instant;

fn main() {
    // Hybrid machines: sigma is the standard deviation.
    let src = r#"
machine(1). machine(2).
temperature ~ normal(20,5).
0.99::cooling(1).
0.95::cooling(2).
works(N) :- machine(N), cooling(N).
works(N) :- machine(N), temperature < 25.0.
query(works(1)).
evidence(works(2), true).
"#;
    let program = parse_program(src).expect("parse");
    let phi = 0.8413447460685429_f64; // Phi(1)
    let closed = (phi + (1.0 - phi) * 0.9405) / (1.0 - 0.05 * (1.0 - phi));
    println!("closed form = {closed}");
    let t0 = Instant::now();
    let cfg = InferConfig { samples: 100_000, seed: 7, ..Default::default() };
    let results = answer_task(&program, &program.task, &cfg).expect("infer");
    println!("hybrid machines -> {} in {:?} (err {:.6})", results[0].probability, t0.elapsed(), (results[0].probability - closed).abs());
    assert!((results[0].probability - closed).abs() < 0.003);

    // Sweets, joint query via auxiliary atom.
    let sweets = r#"
0.5::large.
0.5::balanced.
red ~ poisson(20) :- large.
red ~ poisson(10) :- not large.
yellow ~ poisson(red) :- balanced.
yellow ~ poisson(2*red) :- not balanced.
favorite :- red > 15, not yellow < 5.
t :- favorite, not large.
query(t).
"#;
    let program2 = parse_program(sweets).expect("parse2");
    let t0 = Instant::now();
    let results2 = answer_task(&program2, &program2.task, &cfg).expect("infer2");
    let r = &results2[0];
    println!("sweets joint -> {} +- {:?} in {:?}", r.probability, r.ci_halfwidth, t0.elapsed());

    // Truncated-Poisson oracle for P(favorite, not large).
    let pois_pmf = |lambda: f64, k: u64| -> f64 {
        let kf = k as f64;
        (kf * lambda.ln() - lambda - statrs::function::gamma::ln_gamma(kf + 1.0)).exp()
    };
    let pois_tail_ge = |lambda: f64, k: u64| -> f64 {
        // P(X >= k): 1 - sum_{j<k} pmf
        1.0 - (0..k).map(|j| pois_pmf(lambda, j)).sum::<f64>()
    };
    let mut oracle = 0.0;
    for r_count in 16..200u64 {
        let p_r = pois_pmf(10.0, r_count);
        if p_r < 1e-18 && r_count > 40 { break; }
        oracle += p_r * (0.5 * pois_tail_ge(r_count as f64, 5) + 0.5 * pois_tail_ge(2.0 * r_count as f64, 5));
    }
    oracle *= 0.5;
    println!("oracle = {oracle}, diff = {}", (r.probability - oracle).abs());
    let ci = r.ci_halfwidth.expect("ci");
    assert!((r.probability - oracle).abs() <= 3.0 * ci, "outside 3 CI: {} vs {} (ci {})", r.probability, oracle, ci);

    // Window ADs.
    let window = r#"
0.5::throws(suzy).
throws(billy).
0.8::effect(broken); 0.2::effect(none) :- throws(suzy).
0.6::effect(broken); 0.4::effect(none) :- throws(billy).
query(effect(broken)).
query(effect(none)).
"#;
    let program3 = parse_program(window).expect("parse3");
    let results3 = answer_task(&program3, &program3.task, &InferConfig::default()).expect("infer3");
    println!("effect(broken) -> {} exact={}", results3[0].probability, results3[0].exact);
    println!("effect(none) -> {} exact={}", results3[1].probability, results3[1].exact);
    assert!((results3[0].probability - 0.76).abs() < 1e-9);
    assert!((results3[1].probability - 0.46).abs() < 1e-9);

    // Appendix E color program.
    let color = r#"
n ~ uniform([1,2,3]).
color(1) ~ uniform([red,green,blue]) :- 1 =< n.
color(2) ~ uniform([red,green,blue]) :- 2 =< n.
color(3) ~ uniform([red,green,blue]) :- 3 =< n.
not_red :- not color(2) =:= red.
not_red_either :- color(2) =\= red.
query(not_red).
query(not_red_either).
"#;
    let program4 = parse_program(color).expect("parse4");
    let results4 = answer_task(&program4, &program4.task, &InferConfig::default()).expect("infer4");
    println!("not_red -> {} exact={}", results4[0].probability, results4[0].exact);
    println!("not_red_either -> {}", results4[1].probability);
    assert!((results4[0].probability - 4.0/9.0).abs() < 1e-9);
    assert!((results4[1].probability - 4.0/9.0).abs() < 1e-9);

    // IALW (non-symbolic) on discrete machines should still converge.
    let m = r#"
machine(1). machine(2).
0.8::temperature(low).
0.99::cooling(1).
0.95::cooling(2).
works(N) :- machine(N), cooling(N).
works(N) :- machine(N), temperature(low).
query(works(1)).
evidence(works(2), true).
"#;
    let program5 = parse_program(m).expect("parse5");
    let cfg5 = InferConfig { samples: 200_000, seed: 3, labeler: Labeler::Ialw, ..Default::default() };
    let results5 = answer_task(&program5, &program5.task, &cfg5).expect("infer5");
    println!("machines IALW -> {} (exact={})", results5[0].probability, results5[0].exact);
    assert!((results5[0].probability - 0.9881/0.99).abs() < 0.01);
    println!("ALL OK");
}

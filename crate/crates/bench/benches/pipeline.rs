use criterion::{criterion_group, criterion_main, Criterion};
use critflow_core::construction::{analytic_costs, assemble_stage, ConstructionParams, Feasibility};
use critflow_core::flows::{flow_point, IntegratorConfig, TimeAction, TimeField, VelocityEmbed};
use critflow_core::norms::{gagliardo_seminorm, McConfig, SobolevParams};
use critflow_core::{FieldDescriptor, Point};
use std::hint::black_box;

fn sp23() -> SobolevParams {
    SobolevParams::new(2, 3.0).unwrap()
}

fn params_k2() -> ConstructionParams {
    ConstructionParams::new(
        sp23(),
        2,
        0.25,
        Feasibility::Clamped { log_lambda_floor: (1e-3_f64).ln() },
    )
    .unwrap()
}

fn bench_gagliardo_mc(c: &mut Criterion) {
    let f = FieldDescriptor::radial_bump(2, 0.5);
    let sp = sp23();
    let mc = McConfig { samples: 10_000, seed: 1, rel_stderr_cap: 1.0, chunks: 16 };
    c.bench_function("gagliardo_mc_10k", |b| {
        b.iter(|| gagliardo_seminorm(black_box(&f), &sp, &mc).unwrap())
    });
}

fn bench_flow_rk4(c: &mut Criterion) {
    let params = params_k2();
    let cfg = IntegratorConfig::default();
    let stage = assemble_stage(&params, &[0], &cfg).unwrap();
    let field: &TimeField = &stage.squeeze1_field;
    assert_eq!(field.time_action, TimeAction::Autonomous);
    assert_eq!(field.embed, VelocityEmbed::YOnly);
    let q = Point::new(0.3, vec![0.2]);
    c.bench_function("flow_rk4_squeeze_unit_time", |b| {
        b.iter(|| flow_point(black_box(field), 0.0, 1.0, &q, &cfg).unwrap())
    });
}

fn bench_phi_stage_eval(c: &mut Criterion) {
    let params = params_k2();
    let cfg = IntegratorConfig::default();
    let stage = assemble_stage(&params, &[0], &cfg).unwrap();
    let q = Point::new(0.37, vec![0.21]);
    c.bench_function("conjugated_stage_eval", |b| {
        b.iter(|| stage.conjugated.eval(black_box(&q)).unwrap())
    });
}

fn bench_analytic_ledger(c: &mut Criterion) {
    let sp = sp23();
    c.bench_function("analytic_costs_k_2e20", |b| {
        b.iter(|| analytic_costs(&sp, 0.25, black_box((1u64 << 20) as f64), 1.0, 1.0))
    });
}

criterion_group!(
    benches,
    bench_gagliardo_mc,
    bench_flow_rk4,
    bench_phi_stage_eval,
    bench_analytic_ledger
);
criterion_main!(benches);

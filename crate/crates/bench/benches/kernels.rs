use criterion::{black_box, criterion_group, criterion_main, Criterion};
use snmpp::likelihood::{batch_loss_and_grad, sequence_nll, sequence_nll_grad};
use snmpp::rng;
use snmpp::simulate::{pp1_process, sample_many, thinning_sample};
use snmpp::{EventSequence, Generator, IntensityModel, Link, ModelSpec, NllConfig, Snmpp};

fn fixture() -> (Snmpp, Vec<EventSequence>) {
    let model = Snmpp::new(ModelSpec::new(2, Link::synthetic()), 3).unwrap();
    let seqs = sample_many(&Generator::Pp1, 16, 11, 0).unwrap();
    (model, seqs)
}

fn model_kernels(c: &mut Criterion) {
    let (model, seqs) = fixture();
    let view = model.view();
    c.bench_function("influence", |b| b.iter(|| view.influence(black_box(0), 1, black_box(0.8))));
    let seq = &seqs[0];
    let history = &seq.events[..seq.len() / 2];
    let t = seq.events[seq.len() / 2].t;
    c.bench_function("total_intensity_half_history", |b| b.iter(|| view.total_intensity(black_box(t), history)));
}

fn likelihood(c: &mut Criterion) {
    let (model, seqs) = fixture();
    let view = model.view();
    let config = NllConfig::default();
    c.bench_function("sequence_nll_pp1", |b| {
        b.iter(|| sequence_nll(&view, &seqs[0], &config, &mut rng::stream(0, &[0])))
    });
    c.bench_function("sequence_nll_grad_pp1", |b| {
        b.iter(|| sequence_nll_grad(&model, &view, &seqs[0], &config, &mut rng::stream(0, &[0])).unwrap())
    });
    let batch: Vec<&EventSequence> = seqs.iter().collect();
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    group.bench_function("batch_loss_and_grad_16", |b| b.iter(|| batch_loss_and_grad(&model, &batch, &config).unwrap()));
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let p = pp1_process();
    let mut i = 0u64;
    c.bench_function("thinning_pp1", |b| {
        b.iter(|| {
            i += 1;
            thinning_sample(&p, &mut rng::stream(5, &[i])).unwrap()
        })
    });
    let sc = Generator::SupplyChain(Default::default());
    c.bench_function("supply_chain_sample", |b| {
        b.iter(|| {
            i += 1;
            sc.sample(&mut rng::stream(5, &[i])).unwrap()
        })
    });
}

criterion_group!(benches, model_kernels, likelihood, simulation);
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pigat::eval::auc;
use pigat::fixtures::{toy_events, toy_schema};
use pigat::model::{batch_loss_and_gradient, AttentionKind, Mode};
use pigat::pipeline::Trainer;
use pigat::{encode_instance, InteractionGraph, PigatParams};
use pigat_bench::{bench_config, prepared, random_scores};

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_of_128");
    for attention in [AttentionKind::Dot, AttentionKind::Ffn3] {
        let config = bench_config(attention);
        let data = prepared(2_000, &config);
        let params = PigatParams::new(data.schema(), config.model_config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let batch = &data.train()[..128];
        group.bench_function(format!("forward/{attention}"), |b| {
            b.iter(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                for inst in batch {
                    black_box(params.forward(inst, Mode::Eval, &mut rng).unwrap().probability);
                }
            })
        });
        let mut grads = params.zeros_like();
        group.bench_function(format!("forward_backward/{attention}"), |b| {
            b.iter(|| {
                grads.zero();
                black_box(batch_loss_and_gradient(&params, batch, 3, &mut grads).unwrap())
            })
        });
    }
    group.finish();
}

fn train_epoch(c: &mut Criterion) {
    let config = bench_config(AttentionKind::Dot);
    let data = prepared(2_000, &config);
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch_1600_instances/dot", |b| {
        b.iter_batched(
            || Trainer::new(data.schema(), &config).unwrap(),
            |mut trainer| black_box(trainer.train_epoch(data.train()).unwrap()),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn ranking(c: &mut Criterion) {
    let set = random_scores(10_000, 1);
    c.bench_function("auc/10k", |b| b.iter(|| black_box(auc(&set).unwrap())));
}

fn graph(c: &mut Criterion) {
    let schema = toy_schema(8);
    let events = toy_events(&schema, 5, 2_000);
    c.bench_function("graph/insert_2000", |b| {
        b.iter_batched(
            InteractionGraph::new,
            |g| {
                for e in &events {
                    g.insert_interaction(e.clone()).unwrap();
                }
                g
            },
            BatchSize::SmallInput,
        )
    });
    let g = InteractionGraph::new();
    for e in &events {
        g.insert_interaction(e.clone()).unwrap();
    }
    c.bench_function("graph/snapshot_encode_k10", |b| {
        b.iter(|| {
            let e = &events[1_500];
            let snap = g.snapshot_at(e.timestamp);
            black_box(encode_instance(&schema, e, &snap, 10).unwrap())
        })
    });
}

criterion_group!(benches, forward_backward, train_epoch, ranking, graph);
criterion_main!(benches);

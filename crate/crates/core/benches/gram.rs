use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use migraph::distance::InstanceMetric;
use migraph::eval::{cross_validate, CvPlan, Experiment, ParamGrid};
use migraph::kernel::{GramBatch, KernelConfig, KernelKind};
use migraph::model::{AttributeSchema, Bag, Dataset, Label};
use migraph::parallel::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bags(count: usize, max_n: usize, d: usize) -> Vec<Bag> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(2..=max_n);
            let rows = (0..n).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
            let label = Label::Binary(if i % 2 == 0 { 1 } else { -1 });
            Bag::from_rows(format!("b{i}"), label, rows).unwrap()
        })
        .collect()
}

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn gram_grid(c: &mut Criterion) {
    let bags = bags(60, 10, 16);
    let metric = InstanceMetric::euclidean();
    let gammas: Vec<f64> = (-4..=4).map(|k| 2f64.powi(k) / 3.0).collect();
    let edges = [0.25, 1.0, 4.0];
    let mut group = c.benchmark_group("gram");
    group.sample_size(10);
    for kind in [KernelKind::SetKernel, KernelKind::CliqueWeighted, KernelKind::EpsilonGraph] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(kind.name(), name), &exec, |b, &exec| {
                b.iter(|| {
                    let mut batch = GramBatch::new(bags.iter().collect(), &metric, exec);
                    if kind == KernelKind::EpsilonGraph {
                        batch = batch.with_graphs(1.0);
                    }
                    batch.compute(kind, &KernelConfig::default(), &gammas, &edges).unwrap()
                })
            });
        }
    }
    group.finish();
}

fn outer_folds(c: &mut Criterion) {
    let data = Dataset::new(AttributeSchema::continuous(8), bags(40, 6, 8));
    let grid = ParamGrid {
        gamma_scales: vec![0.5, 1.0, 2.0],
        c: vec![1.0, 10.0],
        ..ParamGrid::default()
    };
    let plan = CvPlan::new(5, 2, 1);
    let mut group = c.benchmark_group("cross_validate");
    group.sample_size(10);
    for (name, exec) in MODES {
        let exp = Experiment::new(KernelKind::CliqueWeighted).with_grid(grid.clone()).with_exec(exec);
        group.bench_function(name, |b| b.iter(|| cross_validate(&data, &exp, &plan).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, gram_grid, outer_folds);
criterion_main!(benches);

use std::collections::HashMap;
use std::io::{stdin, stdout};

use anyhow::Context;
use stressbench::config::StressConfig;
use stressbench::dataset;
use stressbench::perturb;
use stressbench::scorer::stub::{stub_info, ConstantScorer, DegradeScorer, EchoScorer, TableScorer};
use stressbench::scorer::{self, Scorer};

use crate::{Status, StubArgs, StubMode};

fn clean_table(a: &StubArgs, ds: &dataset::Dataset) -> anyhow::Result<HashMap<String, Vec<f32>>> {
    let path = a
        .scores
        .as_ref()
        .context("--scores is required for table and degrade modes")?;
    let loaded = scorer::load_precomputed(path, ds, scorer::CLEAN_TAG)?;
    let m = &loaded.matrix;
    Ok((0..m.n_samples())
        .map(|i| (m.ids()[i].clone(), m.row(i).to_vec()))
        .collect())
}

pub fn serve_stub(a: StubArgs) -> anyhow::Result<Status> {
    let config = StressConfig::load(&a.config)
        .with_context(|| format!("loading config {}", a.config.display()))?;
    let ds = dataset::load_manifest(&config.dataset.manifest, &config.dataset.schema(), &config.dataset.name)?;
    let mode = format!("{:?}", a.mode).to_lowercase();
    let identity = a.identity.clone().unwrap_or_else(|| format!("stub-{mode}"));
    let info = stub_info(&ds, &identity)?;
    let mut scorer: Box<dyn Scorer> = match a.mode {
        StubMode::Constant => Box::new(ConstantScorer::new(info, a.value)?),
        StubMode::Echo => Box::new(EchoScorer::new(info)),
        StubMode::Table => Box::new(TableScorer::new(info, clean_table(&a, &ds)?)),
        StubMode::Degrade => {
            let suite = perturb::build_suite(&config.suite)?;
            let mut s = DegradeScorer::new(info, &ds, &suite, clean_table(&a, &ds)?, a.noise_seed)?;
            if let Some(kind) = a.fail_kind {
                s = s.fail_on(kind);
            }
            Box::new(s)
        }
    };
    scorer::serve(stdin().lock(), stdout().lock(), scorer.as_mut())?;
    Ok(Status::Complete)
}

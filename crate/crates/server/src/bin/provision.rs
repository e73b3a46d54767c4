//! Offline provisioning: dataset, models, component analysis and layouts.
//! Each command prints the object paths of what it published.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use xsys_core::model_service::ModelService;
use xsys_core::provision::{PcaLayout, ProvisionConfig, Provisioner};
use xsys_core::search::SearchService;
use xsys_core::store::{ArtifactStore, DataService};
use xsys_core::{Error, Result};

#[derive(Parser)]
#[command(name = "provision", version, about = "Generate and publish xsys artifacts")]
struct Cli {
    /// Artifact store directory.
    #[arg(long, global = true, env = "XSYS_STORE_DIR", default_value = "store")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON config; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ProvisionConfig> {
        match &self.config {
            Some(p) => ProvisionConfig::from_file(p),
            None => Ok(ProvisionConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// The whole pipeline. Prints the manifest path.
    All(ConfigArg),
    /// Dataset and its vocabulary embedder.
    Dataset(ConfigArg),
    /// Trains the configured models (or one of them) on the configured dataset.
    Model {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        name: Option<String>,
    },
    /// Activations, embeddings, layout and component records for a registered model.
    Components {
        #[command(flatten)]
        config: ConfigArg,
        /// Model name, or `name@<version>`.
        #[arg(long)]
        model: String,
    },
    /// Recomputes the 2-D layout from a model's published embeddings.
    Layout {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = xsys_core::search::DEFAULT_EMBEDDER_ID)]
        embedder: String,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.code() == xsys_core::ErrorCode::InvalidRequest { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let store = Arc::new(ArtifactStore::open(&cli.store)?);
    let data = Arc::new(DataService::new(store.clone()));
    let models = Arc::new(ModelService::new(data.clone()));
    let p = Provisioner::new(models.clone());
    let show = |r: &xsys_core::contracts::VersionRef| println!("{}", store.object_file(r).display());
    match cli.command {
        Command::All(c) => {
            let (r, _) = p.run(&c.load()?)?;
            show(&r);
        }
        Command::Dataset(c) => {
            let cfg = c.load()?;
            let ds = p.dataset(&cfg.dataset_name, &cfg.dataset_params())?;
            show(&ds);
            show(&p.embedder(&ds, &cfg.embedder_id)?);
        }
        Command::Model { config, name } => {
            let cfg = config.load()?;
            let ds = p.dataset(&cfg.dataset_name, &cfg.dataset_params())?;
            let selected: Vec<_> = cfg.models.iter().filter(|m| name.as_ref().is_none_or(|n| &m.name == n)).collect();
            if selected.is_empty() {
                return Err(Error::invalid(format!("no model named {name:?} in config")));
            }
            for m in selected {
                show(&p.train(&ds, &cfg.train_params(m))?);
            }
        }
        Command::Components { config, model } => {
            let cfg = config.load()?;
            let model = data.resolve_model(&model)?;
            let ds = models
                .training_dataset(&model)?
                .ok_or_else(|| Error::invalid(format!("{model} has no training dataset in its provenance")))?;
            let embedder = p.embedder(&ds, &cfg.embedder_id)?;
            let out = p.components(&model, &ds, &embedder, &cfg.component_params(), &PcaLayout)?;
            show(&out.component_records_version);
        }
        Command::Layout { model, embedder } => {
            let emb = SearchService::new(data.clone()).resolve_embeddings(&model, &embedder)?;
            show(&p.layout(&emb, &PcaLayout)?);
        }
    }
    Ok(())
}

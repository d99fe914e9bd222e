//! `splitfss` — process entry points for the split-learning + FSS
//! training protocol, the four-variant comparison harness, the
//! activation-leakage analysis, and the FSS self-test.
//!
//! Exit codes: 0 ok, 1 usage/config, 2 protocol failure, 3 test failure.

mod config;
mod net;

use clap::{Args, Parser, Subcommand};
use config::{load_dataset, ExperimentConfig};
use splitfss::metrics::{compare, comparison_table, MetricsRecord};
use splitfss::protocol::client::{run_client, ClientChannels};
use splitfss::protocol::dealer::{run_dealer, DealerChannels};
use splitfss::protocol::server::{run_server, ServerChannels};
use splitfss::protocol::train::{run_local_sim, LocalRunOptions};
use splitfss::protocol::{Hyperparams, Variant};
use splitfss::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "splitfss",
    version,
    about = "split learning with function secret sharing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path overrides, e.g. --override hyper.batch_size=32
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the data-owner role against live servers.
    Client(ConfigArgs),
    /// Run computation server 0 (listens for every peer).
    Server0(ConfigArgs),
    /// Run computation server 1.
    Server1(ConfigArgs),
    /// Run the trusted dealer (private variants only).
    Dealer(ConfigArgs),
    /// Run every role in this process over loopback channels.
    LocalSim {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the final client model as JSON (usable by `viia`).
        #[arg(long)]
        save_client: Option<PathBuf>,
    },
    /// Run all four variants with a shared seed and print the comparison.
    Table2 {
        #[command(flatten)]
        config: ConfigArgs,
        /// Remove desk-scale caps: full epochs over the full dataset.
        /// The fully-private baseline takes hours at this scale.
        #[arg(long)]
        full: bool,
        /// Exit 3 unless the communication/time ratios hold.
        #[arg(long)]
        check: bool,
    },
    /// Activation-map leakage analysis with PGM dumps.
    Viia {
        #[command(flatten)]
        config: ConfigArgs,
        /// plaintext | masked | masked-zero
        #[arg(long, default_value = "plaintext")]
        mode: String,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Output directory for graymap dumps.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Client model checkpoint (JSON); random init when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// FSS correctness and uniformity suites; exit 3 on any failure.
    Selftest {
        /// Comma-separated wide domains to sample (default 32,64).
        #[arg(long, default_value = "32,64")]
        domain_bits: String,
        /// Corrupt a correction word to demonstrate detection.
        #[arg(long)]
        inject_corruption: bool,
    },
    /// Download the four IDX files from a mirror into a directory.
    FetchData {
        /// Mirror base URL, e.g. `https://storage.googleapis.com/cvdf-datasets/mnist`
        #[arg(long)]
        mirror: String,
        /// Destination directory (created if needed).
        #[arg(long, default_value = "data")]
        dest: PathBuf,
    },
    /// Generate the whole run's dealer material offline onto tape files.
    MakeTapes {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for server0.tape / server1.tape / client.tape.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> splitfss::Result<ExitCode> {
    match cli.command {
        Command::Client(args) => cmd_client(&args),
        Command::Server0(args) => cmd_server(&args, 0),
        Command::Server1(args) => cmd_server(&args, 1),
        Command::Dealer(args) => cmd_dealer(&args),
        Command::LocalSim {
            config,
            save_client,
        } => cmd_local_sim(&config, save_client.as_deref()),
        Command::Table2 {
            config,
            full,
            check,
        } => cmd_table2(&config, full, check),
        Command::Viia {
            config,
            mode,
            count,
            out,
            checkpoint,
        } => cmd_viia(&config, &mode, count, out.as_deref(), checkpoint.as_deref()),
        Command::Selftest {
            domain_bits,
            inject_corruption,
        } => cmd_selftest(&domain_bits, inject_corruption),
        Command::FetchData { mirror, dest } => cmd_fetch_data(&mirror, &dest),
        Command::MakeTapes { config, out } => cmd_make_tapes(&config, &out),
    }
}

/// Run the dealer's generation schedule offline: initial parameter
/// shares, one bundle per training batch per epoch, one per test batch,
/// in consumption order, with per-batch byte accounting.
fn cmd_make_tapes(args: &ConfigArgs, out: &std::path::Path) -> splitfss::Result<ExitCode> {
    use splitfss::protocol::dealer;
    use splitfss::protocol::material::{BatchBundle, DealerTapeWriter, MaterialRecord};
    let (cfg, variant, hp) = load(args)?;
    if !variant.is_private() {
        return Err(Error::Config(
            "public variants consume no dealer material".into(),
        ));
    }
    let (train, test, _real) = load_dataset(&cfg)?;
    let n = hp.batch_size;
    let train_batches = hp.batches_for(train.count);
    let test_batches = hp.test_samples.unwrap_or(test.count).min(test.count) / n;
    std::fs::create_dir_all(out)?;
    let file = |name: &str| -> splitfss::Result<_> {
        Ok(std::io::BufWriter::new(std::fs::File::create(
            out.join(name),
        )?))
    };
    let mut tape0 = DealerTapeWriter::new(file("server0.tape")?, 0)?;
    let mut tape1 = DealerTapeWriter::new(file("server1.tape")?, 1)?;
    let mut tape_c = (variant == Variant::PrivateVanilla)
        .then(|| DealerTapeWriter::new(file("client.tape").unwrap(), 2))
        .transpose()?;

    let mut rng = splitfss::protocol::role_rng(hp.seed, "dealer");
    let (init0, init1) = dealer::init_share_bundles(variant, &hp, &mut rng);
    tape0.write_bundle(&init0)?;
    tape1.write_bundle(&init1)?;
    let mut train_bytes = 0u64;
    for _epoch in 0..hp.epochs {
        for _b in 0..train_batches {
            match variant {
                Variant::PrivateVanilla => {
                    let (alpha, b0, b1) = dealer::vanilla_train_bundle(&hp, n, &mut rng)?;
                    train_bytes += (b0.to_bytes().len() + b1.to_bytes().len()) as u64;
                    tape0.write_bundle(&b0)?;
                    tape1.write_bundle(&b1)?;
                    if let Some(t) = tape_c.as_mut() {
                        let mask = BatchBundle::new(vec![MaterialRecord::Mask(alpha)]);
                        train_bytes += mask.to_bytes().len() as u64;
                        t.write_bundle(&mask)?;
                    }
                }
                Variant::PrivateLocal => {
                    let (b0, b1) = dealer::local_train_bundle(&hp, n, &mut rng)?;
                    train_bytes += (b0.to_bytes().len() + b1.to_bytes().len()) as u64;
                    tape0.write_bundle(&b0)?;
                    tape1.write_bundle(&b1)?;
                }
                _ => unreachable!(),
            }
        }
        for _tb in 0..test_batches {
            match variant {
                Variant::PrivateVanilla => {
                    let (alpha, b0, b1) = dealer::vanilla_test_bundle(&hp, n, &mut rng)?;
                    tape0.write_bundle(&b0)?;
                    tape1.write_bundle(&b1)?;
                    if let Some(t) = tape_c.as_mut() {
                        t.write_bundle(&BatchBundle::new(vec![MaterialRecord::Mask(alpha)]))?;
                    }
                }
                Variant::PrivateLocal => {
                    let (b0, b1) = dealer::local_test_bundle(&hp, n, &mut rng)?;
                    tape0.write_bundle(&b0)?;
                    tape1.write_bundle(&b1)?;
                }
                _ => unreachable!(),
            }
        }
    }
    tape0.finish()?;
    tape1.finish()?;
    if let Some(t) = tape_c {
        t.finish()?;
    }
    let total_batches = (hp.epochs * train_batches) as u64;
    println!(
        "{} epochs x {train_batches} train batches (+{test_batches} test/epoch) for {}",
        hp.epochs,
        variant.name()
    );
    println!(
        "training material: {train_bytes} bytes total, {} bytes per batch",
        train_bytes.checked_div(total_batches).unwrap_or(0)
    );
    println!("tapes written under {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_fetch_data(mirror: &str, dest: &std::path::Path) -> splitfss::Result<ExitCode> {
    if !mirror.starts_with("http://") && !mirror.starts_with("https://") {
        return Err(Error::Config(format!(
            "mirror must be an http(s) base URL, got {mirror:?}"
        )));
    }
    std::fs::create_dir_all(dest)?;
    let base = mirror.trim_end_matches('/');
    for (name, expected) in splitfss::mnist::CANONICAL_FILES {
        let target = dest.join(name);
        if target.exists() && std::fs::metadata(&target)?.len() == expected {
            println!("{name}: already present");
            continue;
        }
        let url = format!("{base}/{name}");
        print!("{url} ... ");
        use std::io::Read;
        let resp = ureq::get(&url)
            .call()
            .map_err(|e| Error::Dataset(format!("{url}: {e}")))?;
        let mut body = Vec::new();
        resp.into_body()
            .into_reader()
            .read_to_end(&mut body)
            .map_err(|e| Error::Dataset(format!("{url}: {e}")))?;
        if body.len() as u64 != expected {
            return Err(Error::Dataset(format!(
                "{name}: got {} bytes, canonical size is {expected}",
                body.len()
            )));
        }
        std::fs::write(&target, &body)?;
        println!("{} bytes", body.len());
    }
    println!("dataset ready under {}", dest.display());
    Ok(ExitCode::SUCCESS)
}

fn load(args: &ConfigArgs) -> splitfss::Result<(ExperimentConfig, Variant, Hyperparams)> {
    let cfg = ExperimentConfig::load(args.config.as_deref(), &args.overrides)?;
    let variant = cfg.variant()?;
    let hp = cfg.hyper.clone();
    hp.arch.validate()?;
    Ok((cfg, variant, hp))
}

fn cmd_client(args: &ConfigArgs) -> splitfss::Result<ExitCode> {
    let (cfg, variant, hp) = load(args)?;
    let (train, test, real) = load_dataset(&cfg)?;
    if !real {
        eprintln!(
            "note: no IDX dataset found (set {} or dataset_dir); using synthetic digits",
            config::DATA_DIR_ENV
        );
    }
    let server0 = net::connect_retry(&cfg.endpoints.server0, net::ROLE_CLIENT)?;
    let (server1, dealer) = if variant.is_private() {
        (
            Some(net::connect_retry(
                &cfg.endpoints.server1,
                net::ROLE_CLIENT,
            )?),
            Some(net::connect_retry(&cfg.endpoints.dealer, net::ROLE_CLIENT)?),
        )
    } else {
        (None, None)
    };
    let started = std::time::Instant::now();
    let outcome = run_client(
        variant,
        &hp,
        &train,
        &test,
        ClientChannels {
            server0: Box::new(server0),
            server1: server1.map(|c| Box::new(c) as _),
            dealer: dealer.map(|c| Box::new(c) as _),
        },
    )?;
    for (epoch, acc) in outcome.epoch_accuracy.iter().enumerate() {
        println!("epoch {:>2}: test accuracy {:.2}%", epoch + 1, acc * 100.0);
    }
    println!(
        "client done in {:.1}s; sent {} bytes",
        started.elapsed().as_secs_f64(),
        outcome.server0_meter.sent_total()
            + outcome.server1_meter.sent_total()
            + outcome.dealer_meter.sent_total()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_server(args: &ConfigArgs, party: u8) -> splitfss::Result<ExitCode> {
    let (cfg, variant, hp) = load(args)?;
    let outcome = if party == 0 {
        let listener = std::net::TcpListener::bind(&cfg.endpoints.server0)?;
        let expected: &[u8] = if variant.is_private() {
            &[net::ROLE_CLIENT, net::ROLE_SERVER1, net::ROLE_DEALER]
        } else {
            &[net::ROLE_CLIENT]
        };
        let mut conns = net::accept_roles(&listener, net::ROLE_SERVER0, expected)?;
        run_server(
            variant,
            0,
            &hp,
            ServerChannels {
                client: Box::new(conns.remove(&net::ROLE_CLIENT).unwrap()),
                peer: conns.remove(&net::ROLE_SERVER1).map(|c| Box::new(c) as _),
                dealer: conns.remove(&net::ROLE_DEALER).map(|c| Box::new(c) as _),
            },
        )?
    } else {
        let listener = std::net::TcpListener::bind(&cfg.endpoints.server1)?;
        let peer = net::connect_retry(&cfg.endpoints.server0, net::ROLE_SERVER1)?;
        let mut conns = net::accept_roles(
            &listener,
            net::ROLE_SERVER1,
            &[net::ROLE_CLIENT, net::ROLE_DEALER],
        )?;
        run_server(
            variant,
            1,
            &hp,
            ServerChannels {
                client: Box::new(conns.remove(&net::ROLE_CLIENT).unwrap()),
                peer: Some(Box::new(peer)),
                dealer: conns.remove(&net::ROLE_DEALER).map(|c| Box::new(c) as _),
            },
        )?
    };
    println!(
        "server{party} done; client link {}B out / {}B in",
        outcome.client_meter.sent_total(),
        outcome.client_meter.received_total()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_dealer(args: &ConfigArgs) -> splitfss::Result<ExitCode> {
    let (cfg, variant, hp) = load(args)?;
    if !variant.is_private() {
        return Err(Error::Config(
            "the dealer role only exists in private variants".into(),
        ));
    }
    let listener = std::net::TcpListener::bind(&cfg.endpoints.dealer)?;
    let server0 = net::connect_retry(&cfg.endpoints.server0, net::ROLE_DEALER)?;
    let server1 = net::connect_retry(&cfg.endpoints.server1, net::ROLE_DEALER)?;
    let mut conns = net::accept_roles(&listener, net::ROLE_DEALER, &[net::ROLE_CLIENT])?;
    let outcome = run_dealer(
        variant,
        &hp,
        DealerChannels {
            client: Box::new(conns.remove(&net::ROLE_CLIENT).unwrap()),
            server0: Box::new(server0),
            server1: Box::new(server1),
        },
    )?;
    println!(
        "dealer done; {} preprocessing bytes per training batch",
        outcome.preprocessing_bytes_per_batch
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_local_sim(
    args: &ConfigArgs,
    save_client: Option<&std::path::Path>,
) -> splitfss::Result<ExitCode> {
    let (cfg, variant, hp) = load(args)?;
    let (train, test, real) = load_dataset(&cfg)?;
    if !real {
        eprintln!("note: using synthetic digits (no IDX dataset found)");
    }
    let outcome = run_local_sim(variant, &hp, &train, &test, LocalRunOptions::default())?;
    let record = MetricsRecord::from_outcome(&outcome, cfg.config_hash(), &hp);
    println!("{}", comparison_table(std::slice::from_ref(&record)));
    for (epoch, acc) in outcome.epoch_accuracy.iter().enumerate() {
        println!("epoch {:>2}: test accuracy {:.2}%", epoch + 1, acc * 100.0);
    }
    if let Some(path) = &cfg.output {
        record.append_json_line(path)?;
        println!("metrics appended to {}", path.display());
    }
    if let Some(path) = save_client {
        let model = outcome
            .client_model
            .ok_or_else(|| Error::Config("this variant keeps no client model".into()))?;
        std::fs::write(path, serde_json::to_vec(&model).unwrap())?;
        println!("client model checkpoint written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_table2(args: &ConfigArgs, full: bool, check: bool) -> splitfss::Result<ExitCode> {
    let (cfg, _variant, mut hp) = load(args)?;
    if full {
        hp.max_batches_per_epoch = None;
        hp.test_samples = None;
        hp.epochs = 10;
        eprintln!("warning: full-scale run requested; the fully-private baseline needs many hours");
    }
    let (train, test, real) = load_dataset(&cfg)?;
    if !real {
        eprintln!("note: using synthetic digits (no IDX dataset found)");
    }
    let mut records = Vec::new();
    for variant in [
        Variant::PublicLocal,
        Variant::PublicVanilla,
        Variant::PrivateVanilla,
        Variant::PrivateLocal,
    ] {
        eprintln!("running {} ...", variant.name());
        let outcome = run_local_sim(variant, &hp, &train, &test, LocalRunOptions::default())?;
        records.push(MetricsRecord::from_outcome(
            &outcome,
            cfg.config_hash(),
            &hp,
        ));
    }
    println!("{}", comparison_table(&records));
    let report = compare(&records).expect("all four variants present");
    println!(
        "client training bytes, fully-private / split-private: {:.2}x",
        report.client_train_ratio_private_local_over_vanilla
    );
    println!(
        "preprocessing bytes per batch, fully-private / split-private: {:.2}x",
        report.preprocessing_ratio_private_local_over_vanilla
    );
    println!(
        "client training bytes, public no-split / public split: {:.2}x",
        report.client_train_ratio_public_local_over_vanilla
    );
    println!(
        "wall time, fully-private / split-private: {:.2}x",
        report.wall_ratio_private_local_over_vanilla
    );
    if let Some(path) = &cfg.output {
        for r in &records {
            r.append_json_line(path)?;
        }
        let csv = path.with_extension("csv");
        let mut text = String::from(MetricsRecord::csv_header());
        text.push('\n');
        for r in &records {
            text.push_str(&r.to_csv_row());
            text.push('\n');
        }
        std::fs::write(&csv, text)?;
        println!("metrics in {} and {}", path.display(), csv.display());
    }
    if check {
        let ok = report.client_train_ratio_private_local_over_vanilla >= 2.0
            && report.preprocessing_ratio_private_local_over_vanilla >= 10.0
            && report.client_train_ratio_public_local_over_vanilla >= 2.5
            && report.wall_ratio_private_local_over_vanilla >= 3.0;
        if !ok {
            eprintln!("ratio gates failed");
            return Ok(ExitCode::from(3));
        }
        println!("all ratio gates hold");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_viia(
    args: &ConfigArgs,
    mode: &str,
    count: usize,
    out: Option<&std::path::Path>,
    checkpoint: Option<&std::path::Path>,
) -> splitfss::Result<ExitCode> {
    use splitfss::viia::{analyze, MaskMode, ViiaOptions};
    let (cfg, _variant, hp) = load(args)?;
    let mode = match mode {
        "plaintext" => MaskMode::Plaintext,
        "masked" => MaskMode::Masked,
        "masked-zero" => MaskMode::MaskedZero,
        other => return Err(Error::Config(format!("unknown viia mode {other:?}"))),
    };
    let (train, _test, real) = load_dataset(&cfg)?;
    if !real {
        eprintln!("note: using synthetic digits (no IDX dataset found)");
    }
    let model = match checkpoint {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)
            .map_err(|e| Error::Config(format!("checkpoint {}: {e}", p.display())))?,
        None => splitfss::nn::init_models(&hp.arch, &hp.fixed, hp.seed).0,
    };
    let mut rng = splitfss::protocol::role_rng(hp.seed, "viia");
    let report = analyze(
        &model,
        &train,
        &ViiaOptions {
            image_count: count,
            mode,
            dump_dir: out,
        },
        &hp.fixed,
        &mut rng,
    )?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest(domain_bits: &str, inject_corruption: bool) -> splitfss::Result<ExitCode> {
    let bits: Vec<u8> = domain_bits
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad domain bits {s:?}")))
        })
        .collect::<splitfss::Result<_>>()?;
    let report = splitfss::selftest::run_fss_selftest(&bits, inject_corruption);
    print!("{}", report.render());
    if report.all_pass() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(3))
    }
}

//! `frailt reference`: the embedded published validation-loss tables.

use clap::Args;
use frailt::reference;

use crate::CliError;

#[derive(Args)]
pub struct ReferenceArgs {
    /// Emit machine-readable CSV instead of the formatted tables
    #[arg(long)]
    pub csv: bool,
}

pub fn run(args: ReferenceArgs) -> Result<(), CliError> {
    if args.csv {
        println!("model_kind,arch,embedding_dim,effective_depth,val_loss");
        for row in reference::standard_rows().iter().chain(&reference::frailt_rows()) {
            println!(
                "{},{},{},{},{}",
                row.model_kind, row.arch, row.embedding_dim, row.effective_depth, row.val_loss
            );
        }
        return Ok(());
    }

    println!("Standard models: final validation loss by embedding dim and layers");
    print!("{:>8}", "dim");
    for arch in reference::STANDARD_ARCHS {
        print!("{arch:>10}");
    }
    println!();
    for (i, dim) in reference::EMBEDDING_DIMS.iter().enumerate() {
        print!("{dim:>8}");
        for loss in reference::STANDARD_LOSS[i] {
            print!("{loss:>10.3}");
        }
        println!();
    }
    println!();
    println!("Recursive models (layers^iterations notation)");
    print!("{:>8}", "dim");
    for arch in reference::FRAILT_ARCHS {
        print!("{arch:>10}");
    }
    println!();
    for (i, dim) in reference::EMBEDDING_DIMS.iter().enumerate() {
        print!("{dim:>8}");
        for loss in reference::FRAILT_LOSS[i] {
            print!("{loss:>10.3}");
        }
        println!();
    }
    Ok(())
}

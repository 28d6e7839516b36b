//! Data-user command line: key setup, outsourcing, queries and updates.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, RwLock};

use clap::{Parser, Subcommand};
use heapsse::client::{Client, ClientError, Collection};
use heapsse::gateway;

#[derive(Parser)]
#[command(name = "client", version, about = "Encrypted substring-of-keyword search client")]
struct Cli {
    /// Client state file holding the keys and local counters.
    #[arg(long, global = true, env = "HEAPSSE_STATE", default_value = "heapsse-client.json")]
    state: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate keys and write a new state file.
    Init {
        #[arg(long)]
        server: String,
        #[arg(long, default_value_t = 128)]
        lambda: u32,
    },
    /// Encrypt and upload a dictionary and a directory of files.
    Outsource {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        files: Option<PathBuf>,
    },
    /// List keywords containing a substring.
    Suggest {
        substring: String,
        /// Also print how many returned ciphertexts decrypted to each keyword.
        #[arg(long)]
        counts: bool,
    },
    /// List the file ids posted under a keyword.
    Files { keyword: String },
    /// Download and decrypt a file.
    Get {
        file_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a keyword to the dictionary.
    Insert { keyword: String },
    /// Remove a keyword from future suggestions.
    Delete { keyword: String },
    /// Post an existing file under a keyword.
    Link { keyword: String, file_id: String },
    /// Revoke the posting in a keyword's slot.
    Unlink { keyword: String, slot: u64 },
    /// Show server index sizes.
    Stats,
    /// Serve the local plaintext search API on 127.0.0.1.
    Gateway {
        #[arg(long, default_value_t = 8731)]
        port: u16,
    },
}

fn run(cli: Cli) -> Result<(), ClientError> {
    match cli.command {
        Command::Init { server, lambda } => {
            Client::init(&cli.state, &server, lambda)?;
            println!("wrote {}", cli.state.display());
        }
        Command::Outsource { dict, files } => {
            let collection = Collection::from_paths(&dict, files.as_deref())?;
            let stats = Client::open(&cli.state)?.outsource(&collection)?;
            println!(
                "outsourced {} keywords, {} files: iw_nodes={} iwr_nodes={} if_entries={}",
                collection.dictionary.len(),
                stats.n,
                stats.iw_nodes,
                stats.iwr_nodes,
                stats.if_entries
            );
        }
        Command::Suggest { substring, counts } => {
            for s in Client::open(&cli.state)?.suggest(&substring)? {
                if counts {
                    println!("{}\t{}", s.keyword, s.source_count);
                } else {
                    println!("{}", s.keyword);
                }
            }
        }
        Command::Files { keyword } => {
            let client = Client::open(&cli.state)?;
            for id in client.files_for(&keyword)? {
                match client.file_name(&id) {
                    Some(name) => println!("{id}\t{name}"),
                    None => println!("{id}"),
                }
            }
        }
        Command::Get { file_id, out } => {
            let bytes = Client::open(&cli.state)?.fetch_and_decrypt(&file_id)?;
            std::fs::write(&out, &bytes).map_err(|e| ClientError::Validation(format!("{}: {e}", out.display())))?;
        }
        Command::Insert { keyword } => {
            let o = Client::open(&cli.state)?.insert_keyword(&keyword)?;
            println!("inserted {keyword}: {} labels, {} nodes added", o.label_count, o.nodes_added);
        }
        Command::Delete { keyword } => {
            Client::open(&cli.state)?.delete_keyword(&keyword)?;
            println!("deleted {keyword}");
        }
        Command::Link { keyword, file_id } => {
            let slot = Client::open(&cli.state)?.add_posting(&keyword, &file_id)?;
            println!("posted {file_id} under {keyword} in slot {slot}");
        }
        Command::Unlink { keyword, slot } => {
            Client::open(&cli.state)?.delete_posting(&keyword, slot)?;
            println!("revoked slot {slot} of {keyword}");
        }
        Command::Stats => {
            let s = Client::open(&cli.state)?.stats()?;
            println!("iw_nodes={} iwr_nodes={} if_entries={} n={}", s.iw_nodes, s.iwr_nodes, s.if_entries, s.n);
        }
        Command::Gateway { port } => {
            let client = Arc::new(RwLock::new(Client::open(&cli.state)?));
            let rt = tokio::runtime::Runtime::new().map_err(|e| ClientError::Validation(e.to_string()))?;
            rt.block_on(async move {
                let listener = gateway::bind(port).await.map_err(|e| ClientError::Validation(e.to_string()))?;
                let addr = listener.local_addr().map_err(|e| ClientError::Validation(e.to_string()))?;
                println!("gateway listening on http://{addr}");
                gateway::serve(listener, client)
                    .await
                    .map_err(|e| ClientError::Validation(e.to_string()))
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

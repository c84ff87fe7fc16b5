use detbench::harness::TrackingAllocator;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

fn main() {
    std::process::exit(detbench::cli::dispatch(std::env::args_os()));
}

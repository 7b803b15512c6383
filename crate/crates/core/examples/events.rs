//! Feeds documents and container milestones to the event processor and
//! prints the contract jobs each one unlocks.

use goods_ap::bench::{generate_corpus, CorpusSpec, Range};
use goods_ap::edi::EdiDocument;
use goods_ap::events::{EventProcessor, Job, JobOutcome};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_corpus(&CorpusSpec {
        num_pos: 1,
        line_items_per_po: Range { min: 2, max: 2 },
        ..CorpusSpec::default()
    })?;
    let mut processor = EventProcessor::new();

    let docs = corpus
        .purchase_orders
        .iter()
        .cloned()
        .map(EdiDocument::PurchaseOrder)
        .chain(corpus.despatch_advices.iter().cloned().map(EdiDocument::DespatchAdvice))
        .chain(corpus.commercial_invoices.iter().cloned().map(EdiDocument::CommercialInvoice))
        .chain(corpus.carrier_invoices.iter().cloned().map(EdiDocument::CarrierInvoice));
    for doc in docs {
        let jobs = processor.document_ingested(&doc);
        run(format!("{} {}", doc.kind(), doc.id()), jobs, &mut processor);
    }
    for s in &corpus.shipments {
        processor.register(s.bol.clone(), s.container_no.clone(), s.lines.clone())?;
    }
    let (late, early): (Vec<_>, Vec<_>) = corpus
        .events
        .iter()
        .partition(|e| e.event_type == goods_ap::events::DISPATCHED_FROM_TRUCK);
    for e in early {
        let jobs = processor.ingest(e)?;
        run(format!("{} {}", e.container_no, e.event_type), jobs, &mut processor);
    }
    for ra in &corpus.receiving_advices {
        let doc = EdiDocument::ReceivingAdvice(ra.clone());
        let jobs = processor.document_ingested(&doc);
        run(format!("RA {}", ra.ra_id), jobs, &mut processor);
    }
    for e in late {
        let jobs = processor.ingest(e)?;
        run(format!("{} {}", e.container_no, e.event_type), jobs, &mut processor);
    }
    for (line, p) in processor.lines() {
        println!("{line}: pass1 {:?}, pass2 {:?}, payments {:?}", p.pass1, p.pass2, p.payments);
    }
    Ok(())
}

fn run(label: String, unlocked: Vec<Job>, p: &mut EventProcessor) {
    println!("{label}");
    for job in &unlocked {
        println!("  unlocks {job}");
    }
    loop {
        let jobs = p.take_ready(|_| true);
        if jobs.is_empty() {
            break;
        }
        for job in jobs {
            // pretend the contract call committed
            for next in p.complete(&job, JobOutcome::Committed) {
                println!("  {job} done, unlocks {next}");
            }
        }
    }
}

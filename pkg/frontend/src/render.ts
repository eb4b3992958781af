/** Figure rendering from a completed benchmark results directory. */

import * as fs from "node:fs";
import * as path from "node:path";

import { BenchRow, DiagnosticsRow, parseBenchTable, parseDiagnosticsTable } from "./csv.js";
import { methodColor, renderChart, Series } from "./svg.js";

export interface RenderResult {
    written: string[];
    skipped: Array<{ figure: string; reason: string }>;
}

function groupByMethod(rows: BenchRow[]): Map<string, BenchRow[]> {
    const groups = new Map<string, BenchRow[]>();
    for (const row of rows) {
        const bucket = groups.get(row.method) ?? [];
        bucket.push(row);
        groups.set(row.method, bucket);
    }
    return groups;
}

function benchSeries(
    rows: BenchRow[],
    x: (r: BenchRow) => number,
    y: (r: BenchRow) => number | null,
): Series[] {
    const out: Series[] = [];
    let index = 0;
    for (const [method, group] of groupByMethod(rows)) {
        const points = group
            .map((r) => ({ x: x(r), y: y(r) }))
            .filter((p): p is { x: number; y: number } => p.y !== null)
            .sort((a, b) => a.x - b.x);
        if (points.length > 0) {
            out.push({ label: method, color: methodColor(method, index), points });
        }
        index += 1;
    }
    return out;
}

function cessSeries(rows: DiagnosticsRow[]): Series[] {
    return [
        {
            label: "cess",
            color: methodColor("gbf", 0),
            points: rows.map((r) => ({ x: r.iter, y: r.cess })),
        },
        {
            label: "ess",
            color: methodColor("cmc", 1),
            points: rows.map((r) => ({ x: r.iter, y: r.ess })),
        },
    ];
}

export function renderFigures(inDir: string, outDir: string): RenderResult {
    fs.mkdirSync(outDir, { recursive: true });
    const written: string[] = [];
    const skipped: Array<{ figure: string; reason: string }> = [];

    const write = (name: string, svg: string) => {
        const target = path.join(outDir, name);
        fs.writeFileSync(target, svg);
        written.push(target);
    };
    const skip = (figure: string, reason: string) => {
        skipped.push({ figure, reason });
        console.warn(`warning: skipping ${figure}: ${reason}`);
    };

    const benchPath = path.join(inDir, "bench.csv");
    let bench: BenchRow[] | null = null;
    if (fs.existsSync(benchPath)) {
        bench = parseBenchTable(fs.readFileSync(benchPath, "utf8"));
    }
    if (bench === null || bench.length === 0) {
        const reason = bench === null ? "bench.csv not found" : "bench.csv has no rows";
        skip("iad_vs_C", reason);
        skip("iad_vs_budget", reason);
        skip("mesh_size", reason);
    } else {
        const iadByC = benchSeries(bench, (r) => r.C, (r) => r.iad);
        if (iadByC.length > 0) {
            write(
                "iad_vs_C.svg",
                renderChart(iadByC, {
                    title: "Integrated absolute distance vs factor count",
                    xLabel: "factors C",
                    yLabel: "IAD",
                }),
            );
        } else {
            skip("iad_vs_C", "no rows carry an iad value");
        }
        const iadByBudget = benchSeries(bench, (r) => r.runtime_s, (r) => r.iad);
        if (iadByBudget.length > 0) {
            write(
                "iad_vs_budget.svg",
                renderChart(iadByBudget, {
                    title: "Integrated absolute distance vs runtime budget",
                    xLabel: "runtime (s, log scale)",
                    yLabel: "IAD",
                    logX: true,
                }),
            );
        } else {
            skip("iad_vs_budget", "no rows carry an iad value");
        }
        write(
            "mesh_size.svg",
            renderChart(
                benchSeries(bench, (r) => r.C, (r) => r.n_mesh),
                {
                    title: "Temporal mesh size vs factor count",
                    xLabel: "factors C",
                    yLabel: "mesh intervals n",
                },
            ),
        );
    }

    const diagnosticsPath = path.join(inDir, "diagnostics.csv");
    if (!fs.existsSync(diagnosticsPath)) {
        skip("cess_trace", "diagnostics.csv not found");
    } else {
        const rows = parseDiagnosticsTable(fs.readFileSync(diagnosticsPath, "utf8"));
        if (rows.length === 0) {
            skip("cess_trace", "diagnostics.csv has no rows");
        } else {
            write(
                "cess_trace.svg",
                renderChart(cessSeries(rows), {
                    title: "Conditional ESS trace",
                    xLabel: "iteration",
                    yLabel: "effective sample size",
                }),
            );
        }
    }
    return { written, skipped };
}

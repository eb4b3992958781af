/** CSV parsing and schema checks for the runner's output tables. */

export class SchemaMismatch extends Error {
    constructor(public readonly column: string, message: string) {
        super(message);
        this.name = "SchemaMismatch";
    }
}

export interface BenchRow {
    method: string;
    C: number;
    N: number;
    iad: number | null;
    runtime_s: number;
    n_mesh: number;
}

export interface DiagnosticsRow {
    iter: number;
    t_j: number;
    cess: number;
    ess: number;
    resampled: number;
    delta_j: number;
}

const BENCH_COLUMNS = ["method", "C", "N", "iad", "runtime_s", "n_mesh"];
const DIAGNOSTICS_COLUMNS = ["iter", "t_j", "cess", "ess", "resampled", "delta_j"];

export function parseCsv(text: string): { header: string[]; rows: string[][] } {
    const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
    if (lines.length === 0) {
        return { header: [], rows: [] };
    }
    const header = lines[0].split(",").map((c) => c.trim());
    const rows = lines.slice(1).map((line) => line.split(",").map((c) => c.trim()));
    return { header, rows };
}

function checkColumns(header: string[], expected: string[], table: string): void {
    for (const col of expected) {
        if (!header.includes(col)) {
            throw new SchemaMismatch(col, `${table} is missing column '${col}'`);
        }
    }
}

function numericField(
    raw: string,
    column: string,
    table: string,
    line: number,
): number {
    const value = Number(raw);
    if (raw === "" || !Number.isFinite(value)) {
        throw new SchemaMismatch(
            column,
            `${table} line ${line}: column '${column}' is not finite (${raw})`,
        );
    }
    return value;
}

export function parseBenchTable(text: string): BenchRow[] {
    const { header, rows } = parseCsv(text);
    checkColumns(header, BENCH_COLUMNS, "bench.csv");
    const idx = new Map(header.map((name, i) => [name, i]));
    return rows.map((row, i) => {
        const get = (name: string) => row[idx.get(name)!] ?? "";
        const iadRaw = get("iad");
        return {
            method: get("method"),
            C: numericField(get("C"), "C", "bench.csv", i + 2),
            N: numericField(get("N"), "N", "bench.csv", i + 2),
            iad: iadRaw === "" ? null : numericField(iadRaw, "iad", "bench.csv", i + 2),
            runtime_s: numericField(get("runtime_s"), "runtime_s", "bench.csv", i + 2),
            n_mesh: numericField(get("n_mesh"), "n_mesh", "bench.csv", i + 2),
        };
    });
}

export function parseDiagnosticsTable(text: string): DiagnosticsRow[] {
    const { header, rows } = parseCsv(text);
    if (header.length === 0) {
        return [];
    }
    checkColumns(header, DIAGNOSTICS_COLUMNS, "diagnostics.csv");
    const idx = new Map(header.map((name, i) => [name, i]));
    return rows.map((row, i) => {
        const field = (name: string) =>
            numericField(row[idx.get(name)!] ?? "", name, "diagnostics.csv", i + 2);
        return {
            iter: field("iter"),
            t_j: field("t_j"),
            cess: field("cess"),
            ess: field("ess"),
            resampled: field("resampled"),
            delta_j: field("delta_j"),
        };
    });
}

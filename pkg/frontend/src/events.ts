// JSON-lines event stream consumer with automatic resubscribe: if the
// stream drops mid-run, a new request resumes from the next un-seen
// record index, so the log never gaps or duplicates.

export interface UpdateRecord {
	k: number;
	point: number;
	decision: string;
	loss: number;
	distance: number;
}

export interface TerminalRecord {
	event: string; // "done" | "failed"
	converged?: boolean;
	error?: string;
}

export type StreamRecord = UpdateRecord | TerminalRecord;

export function isTerminal(r: StreamRecord): r is TerminalRecord {
	return (r as TerminalRecord).event !== undefined;
}

export class EventLog {
	readonly updates: UpdateRecord[] = [];
	terminal: TerminalRecord | null = null;
	private buffer = "";

	// Index to resume a dropped subscription from (terminal included,
	// since the server streams it as a regular line).
	get nextIndex(): number {
		return this.updates.length + (this.terminal ? 1 : 0);
	}

	get rejectedCount(): number {
		return this.updates.filter((r) => r.decision !== "accept").length;
	}

	ingestChunk(chunk: string, onRecord?: (r: StreamRecord) => void): void {
		this.buffer += chunk;
		const lines = this.buffer.split("\n");
		this.buffer = lines.pop() ?? "";
		for (const line of lines) {
			if (!line.trim()) continue;
			const record = JSON.parse(line) as StreamRecord;
			if (isTerminal(record)) {
				this.terminal = record;
			} else {
				this.updates.push(record);
			}
			onRecord?.(record);
		}
	}
}

export interface SubscribeOptions {
	fetchFn?: typeof fetch;
	maxRetries?: number;
	onRecord?: (r: StreamRecord) => void;
}

export async function subscribeEvents(
	baseUrl: string,
	sessionId: string,
	log: EventLog,
	opts: SubscribeOptions = {},
): Promise<TerminalRecord> {
	const fetchFn = opts.fetchFn ?? fetch;
	const maxRetries = opts.maxRetries ?? 5;
	let retries = 0;
	while (log.terminal === null) {
		const url = `${baseUrl}/sessions/${sessionId}/events?start=${log.nextIndex}`;
		try {
			const resp = await fetchFn(url);
			if (!resp.ok || resp.body === null) {
				throw new Error(`events request failed: ${resp.status}`);
			}
			const reader = resp.body.getReader();
			const decoder = new TextDecoder();
			for (;;) {
				const { done, value } = await reader.read();
				if (done) break;
				log.ingestChunk(decoder.decode(value, { stream: true }), opts.onRecord);
			}
		} catch (err) {
			if (retries++ >= maxRetries) throw err;
			continue; // resubscribe from log.nextIndex
		}
	}
	return log.terminal;
}

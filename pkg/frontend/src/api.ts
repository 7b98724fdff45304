// Thin client for the session HTTP API. The UI touches engine state only
// through these calls.

export interface SessionInfo {
	id: string;
	status: string;
	error: string | null;
	events: number;
}

export class ApiClient {
	constructor(
		private baseUrl: string = "",
		private fetchFn: typeof fetch = fetch,
	) {}

	private async json<T>(resp: Response): Promise<T> {
		if (!resp.ok) {
			const body = await resp.text();
			throw new Error(`${resp.status}: ${body}`);
		}
		return (await resp.json()) as T;
	}

	async createSession(latent: File, features?: File): Promise<string> {
		const form = new FormData();
		form.append("latent", latent);
		if (features) form.append("features", features);
		const resp = await this.fetchFn(`${this.baseUrl}/sessions`, {
			method: "POST",
			body: form,
		});
		const doc = await this.json<{ id: string }>(resp);
		return doc.id;
	}

	async segment(
		id: string,
		params: { n_segments: number; compactness: number; max_iters?: number },
	): Promise<{ status: string; n_patches: number }> {
		const resp = await this.fetchFn(`${this.baseUrl}/sessions/${id}/segment`, {
			method: "POST",
			headers: { "content-type": "application/json" },
			body: JSON.stringify(params),
		});
		return this.json(resp);
	}

	async mask(
		id: string,
		payload: { pairs: { handle: [number, number]; target: [number, number] }[] },
	): Promise<{ status: string; source_labels: number[] }> {
		const resp = await this.fetchFn(`${this.baseUrl}/sessions/${id}/mask`, {
			method: "POST",
			headers: { "content-type": "application/json" },
			body: JSON.stringify(payload),
		});
		return this.json(resp);
	}

	async drag(id: string, body: object): Promise<{ status: string }> {
		const resp = await this.fetchFn(`${this.baseUrl}/sessions/${id}/drag`, {
			method: "POST",
			headers: { "content-type": "application/json" },
			body: JSON.stringify(body),
		});
		return this.json(resp);
	}

	async info(id: string): Promise<SessionInfo> {
		const resp = await this.fetchFn(`${this.baseUrl}/sessions/${id}`);
		return this.json(resp);
	}

	artifactUrl(id: string, name: string): string {
		return `${this.baseUrl}/sessions/${id}/artifacts/${name}`;
	}

	viewUrl(id: string, name: "latent" | "features"): string {
		return `${this.baseUrl}/sessions/${id}/view/${name}`;
	}

	async artifactJson<T>(id: string, name: string): Promise<T> {
		const resp = await this.fetchFn(this.artifactUrl(id, name));
		return this.json(resp);
	}
}

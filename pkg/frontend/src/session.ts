import { ApiClient, ApiError } from "./api.js";
import {
  CurvesPayload,
  Label,
  QueryPayload,
  SessionConfigOverrides,
  SessionSummary,
} from "./types.js";

export type Phase = "idle" | "working" | "labeling" | "finished" | "error";

/**
 * View state for one annotation session. Everything shown to the user is a
 * projection of the last server responses; the only client-side state is
 * the label draft, which survives a rejected submission so the annotator
 * can fix it instead of starting over.
 */
export interface SessionView {
  phase: Phase;
  summary: SessionSummary | null;
  query: QueryPayload | null;
  draft: (Label | null)[];
  curves: CurvesPayload | null;
  notice: string | null;
  error: string | null;
}

function emptyView(): SessionView {
  return {
    phase: "idle",
    summary: null,
    query: null,
    draft: [],
    curves: null,
    notice: null,
    error: null,
  };
}

export class SessionController {
  private view: SessionView = emptyView();
  private listeners: Array<(view: SessionView) => void> = [];

  constructor(private readonly client: ApiClient) {}

  onChange(listener: (view: SessionView) => void): void {
    this.listeners.push(listener);
  }

  get state(): SessionView {
    return this.view;
  }

  private update(patch: Partial<SessionView>): void {
    this.view = { ...this.view, ...patch };
    for (const listener of this.listeners) {
      listener(this.view);
    }
  }

  get sessionId(): string | null {
    return this.view.summary?.id ?? null;
  }

  /** True once every instance of the pending bag has a chosen label. */
  canSubmit(): boolean {
    return (
      this.view.phase === "labeling" &&
      this.view.query !== null &&
      this.view.draft.length === this.view.query.instance_count &&
      this.view.draft.every((v) => v === 1 || v === -1)
    );
  }

  setLabel(index: number, label: Label | null): void {
    if (this.view.phase !== "labeling" || !this.view.query) {
      return;
    }
    if (index < 0 || index >= this.view.draft.length) {
      return;
    }
    const draft = this.view.draft.slice();
    draft[index] = label;
    this.update({ draft });
  }

  async start(
    dataset: string,
    strategy: string,
    config?: SessionConfigOverrides,
  ): Promise<void> {
    this.update({ ...emptyView(), phase: "working" });
    try {
      const summary = await this.client.createSession(dataset, strategy, config);
      this.update({ summary });
      await this.syncFromServer();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Rebuild the whole view for an existing session (page refresh). */
  async resume(sessionId: string): Promise<void> {
    this.update({ ...emptyView(), phase: "working" });
    try {
      const summary = await this.client.session(sessionId);
      this.update({ summary });
      await this.syncFromServer();
    } catch (err) {
      this.fail(err);
    }
  }

  private async syncFromServer(keepDraft = false): Promise<void> {
    const id = this.sessionId;
    if (!id) {
      return;
    }
    const summary = await this.client.session(id);
    const curves = await this.client.curves(id);
    if (summary.status === "finished") {
      this.update({ phase: "finished", summary, curves, query: null, draft: [] });
      return;
    }
    const query = await this.client.nextQuery(id);
    const sameBag = this.view.query?.bag_id === query.bag_id;
    const draft =
      keepDraft && sameBag
        ? this.view.draft
        : new Array<Label | null>(query.instance_count).fill(null);
    this.update({ phase: "labeling", summary, curves, query, draft });
  }

  async submit(): Promise<void> {
    if (!this.canSubmit() || !this.view.query || !this.sessionId) {
      return;
    }
    const bagId = this.view.query.bag_id;
    const labels = this.view.draft as Label[];
    this.update({ phase: "working", notice: null, error: null });
    try {
      await this.client.submitLabels(this.sessionId, bagId, labels);
      await this.syncFromServer();
    } catch (err) {
      if (err instanceof ApiError && err.status === 400) {
        // rejected draft (for instance an all-negative set for a positive
        // bag): keep it on screen with the server's explanation
        this.update({ phase: "labeling", notice: err.message });
        return;
      }
      if (err instanceof ApiError && err.status === 409) {
        // out-of-order or duplicate: the server moved on, mirror it
        try {
          await this.syncFromServer();
          this.update({ notice: err.message });
        } catch (refreshErr) {
          this.fail(refreshErr);
        }
        return;
      }
      this.fail(err);
    }
  }

  private fail(err: unknown): void {
    const message = err instanceof Error ? err.message : String(err);
    this.update({ phase: "error", error: message });
  }
}

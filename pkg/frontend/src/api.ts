// Thin typed client for the pastiche HTTP API.
//
// Every call goes through `fetch`; errors surface as ApiError carrying the
// HTTP status and the server's {error, message} detail so the UI can show
// them inline next to the offending weights.

export interface StylesInfo {
  styles: string[];
  per_style_parameters: number;
  loss_caches: string[];
}

export interface ContentInfo {
  content_id: string;
  width: number;
  height: number;
}

export interface SweepFrame {
  alpha: number;
  style_loss_a: number;
  style_loss_b: number;
  png_base64: string;
}

export interface SweepResult {
  frames: SweepFrame[];
}

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let code = "http-error";
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = await response.json();
    const detail = body.detail ?? body;
    if (typeof detail === "object" && detail !== null) {
      code = detail.error ?? code;
      message = detail.message ?? JSON.stringify(detail);
    } else if (typeof detail === "string") {
      message = detail;
    }
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(response.status, code, message);
}

export class PasticheClient {
  constructor(private readonly base: string = "") {}

  private url(path: string): string {
    return this.base.replace(/\/$/, "") + path;
  }

  async styles(): Promise<StylesInfo> {
    const response = await fetch(this.url("/api/styles"));
    await raiseForStatus(response);
    return response.json();
  }

  /** Upload raw image bytes; the server answers with a content-addressed id. */
  async uploadContent(data: Blob | ArrayBuffer): Promise<ContentInfo> {
    const response = await fetch(this.url("/api/content"), {
      method: "POST",
      body: data,
      headers: { "content-type": "application/octet-stream" },
    });
    await raiseForStatus(response);
    return response.json();
  }

  /** POST the exact weight map; resolves to a PNG blob of the pastiche. */
  async blend(
    contentId: string,
    weights: Record<string, number>,
    signal?: AbortSignal,
  ): Promise<Blob> {
    const response = await fetch(this.url("/api/blend"), {
      method: "POST",
      body: JSON.stringify({ content_id: contentId, weights }),
      headers: { "content-type": "application/json" },
      signal,
    });
    await raiseForStatus(response);
    return response.blob();
  }

  async sweep(
    contentId: string,
    styleA: string,
    styleB: string,
    steps: number,
  ): Promise<SweepResult> {
    const response = await fetch(this.url("/api/sweep"), {
      method: "POST",
      body: JSON.stringify({
        content_id: contentId,
        style_a: styleA,
        style_b: styleB,
        steps,
        format: "json",
      }),
      headers: { "content-type": "application/json" },
    });
    await raiseForStatus(response);
    return response.json();
  }
}
